#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>

#include "json.hpp"

namespace activeseg {

/// Error with an HTTP-style status code attached.
class ApiError : public std::runtime_error {
 public:
  ApiError(int status, const std::string& what) : std::runtime_error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

inline constexpr int kApiVersion = 1;

struct Session;

/// Owns every annotation session under a root directory. Sessions are
/// checkpointed after each state change and resumed by the constructor.
/// Mutations of one session are serialized; queries and progress are served
/// from the last published snapshot.
class SessionManager {
 public:
  explicit SessionManager(std::filesystem::path root);
  ~SessionManager();
  SessionManager(const SessionManager&) = delete;
  SessionManager& operator=(const SessionManager&) = delete;

  /// request: {"v":1, "manifest":path, "phase":"pixel"|"boundary",
  ///           "oracle":bool, "config":{...}}. Returns the new id.
  std::string create(const nlohmann::json& request);
  nlohmann::json queries(const std::string& id) const;
  nlohmann::json post_labels(const std::string& id, const nlohmann::json& body);
  nlohmann::json brush(const std::string& id, const nlohmann::json& body);
  nlohmann::json progress(const std::string& id) const;
  /// Serialized ensemble of the session's current model.
  std::string export_model(const std::string& id) const;
  std::vector<std::string> ids() const;

  /// Blocks until an oracle session's worker has finished (test helper).
  void wait(const std::string& id) const;

 private:
  std::shared_ptr<Session> find(const std::string& id) const;

  std::filesystem::path root_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::size_t next_id_ = 1;
};

}  // namespace activeseg
