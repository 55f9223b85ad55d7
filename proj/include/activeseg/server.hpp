#pragma once

#include <string>

#include "activeseg/session.hpp"

namespace httplib {
class Server;
}

namespace activeseg {

/// Registers the annotation API on srv. Every JSON payload carries "v".
///   POST /sessions                 create
///   GET  /sessions/{id}/queries    pending batch
///   POST /sessions/{id}/labels     answer the pending batch
///   POST /sessions/{id}/brush      initial strokes (pixel sessions)
///   GET  /sessions/{id}/progress
///   GET  /sessions/{id}/export     serialized ensemble
void register_routes(httplib::Server& srv, SessionManager& sessions);

/// Blocks serving on host:port until the process is stopped.
void run_server(SessionManager& sessions, const std::string& host, int port);

}  // namespace activeseg
