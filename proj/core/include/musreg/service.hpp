#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "musreg/pipeline.hpp"

namespace musreg {

struct ServiceResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Request handling for the case HTTP API, independent of the transport.
/// Per-case mutations are serialised; one registration runs per case at a time.
class CaseService {
 public:
  /// pipeline.root is ignored; each request targets root/<case id>.
  explicit CaseService(fs::path root, PipelineConfig pipeline = {});

  ServiceResponse list_cases() const;
  ServiceResponse get_case(const std::string& id) const;
  ServiceResponse get_microus_slice(const std::string& id, int k) const;
  ServiceResponse get_histology(const std::string& id, int n) const;
  ServiceResponse get_correspondence(const std::string& id) const;
  ServiceResponse put_correspondence(const std::string& id, const std::string& body);
  ServiceResponse register_case(const std::string& id);
  ServiceResponse get_overlay(const std::string& id, int n) const;
  ServiceResponse get_report(const std::string& id) const;

  /// Case ids are directory names made of [A-Za-z0-9._-], never "." or "..".
  static bool valid_case_id(const std::string& id);
  std::vector<std::string> case_ids() const;

 private:
  struct CaseState {
    std::mutex write;
    bool busy = false;
    std::string last_status = "idle";
  };

  std::optional<CaseLayout> find_case(const std::string& id) const;
  CaseState& state(const std::string& id) const;
  int microus_slice_count(const CaseLayout& layout) const;

  fs::path root_;
  PipelineConfig pipeline_;
  mutable std::mutex states_mutex_;
  mutable std::map<std::string, std::unique_ptr<CaseState>> states_;
};

struct ServeOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  /// Served at "/" when set (the browser app).
  std::optional<fs::path> static_dir;
  PipelineConfig pipeline;
};

/// HTTP front end for CaseService.
class HttpService {
 public:
  HttpService(fs::path root, ServeOptions options);
  ~HttpService();
  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  /// Binds (port 0 picks a free port), serves on a background thread and
  /// returns the bound port.
  int start();
  /// Binds the configured port and serves until stop().
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Blocking convenience wrapper.
void serve(const fs::path& root, int port, const ServeOptions& options = {});

}  // namespace musreg
