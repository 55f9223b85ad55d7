#include "activeseg/server.hpp"

#include <stdexcept>

#include "httplib.h"

namespace activeseg {
namespace {

using nlohmann::json;

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"v", kApiVersion}, {"error", message}});
}

json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw ApiError(400, std::string("malformed JSON: ") + e.what());
  }
}

template <class Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const ApiError& e) {
      send_error(res, e.status(), e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, e.what());
    } catch (const std::invalid_argument& e) {
      send_error(res, 400, e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  };
}

}  // namespace

void register_routes(httplib::Server& srv, SessionManager& sessions) {
  srv.Post("/sessions", guarded([&](const httplib::Request& req, httplib::Response& res) {
             const std::string id = sessions.create(parse_body(req));
             send_json(res, 201, {{"v", kApiVersion}, {"id", id}});
           }));
  srv.Get(R"(/sessions/([^/]+)/queries)", guarded([&](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, sessions.queries(req.matches[1]));
          }));
  srv.Post(R"(/sessions/([^/]+)/labels)", guarded([&](const httplib::Request& req, httplib::Response& res) {
             send_json(res, 200, sessions.post_labels(req.matches[1], parse_body(req)));
           }));
  srv.Post(R"(/sessions/([^/]+)/brush)", guarded([&](const httplib::Request& req, httplib::Response& res) {
             send_json(res, 200, sessions.brush(req.matches[1], parse_body(req)));
           }));
  srv.Get(R"(/sessions/([^/]+)/progress)", guarded([&](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, sessions.progress(req.matches[1]));
          }));
  srv.Get(R"(/sessions/([^/]+)/export)", guarded([&](const httplib::Request& req, httplib::Response& res) {
            res.status = 200;
            res.set_content(sessions.export_model(req.matches[1]), "application/octet-stream");
          }));
}

void run_server(SessionManager& sessions, const std::string& host, int port) {
  httplib::Server srv;
  register_routes(srv, sessions);
  if (!srv.listen(host, port)) throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace activeseg
