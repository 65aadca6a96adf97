#include "musreg/service.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "musreg/errors.hpp"

namespace musreg {

using nlohmann::json;

namespace {

ServiceResponse json_response(int status, const json& body) {
  return {status, "application/json", body.dump()};
}

ServiceResponse error_response(int status, const std::string& reason) {
  return json_response(status, {{"error", reason}});
}

ServiceResponse file_response(const fs::path& path, const std::string& content_type) {
  if (!fs::exists(path)) return error_response(404, "not found: " + path.filename().string());
  return {200, content_type, read_text_file(path)};
}

}  // namespace

CaseService::CaseService(fs::path root, PipelineConfig pipeline)
    : root_(std::move(root)), pipeline_(std::move(pipeline)) {}

bool CaseService::valid_case_id(const std::string& id) {
  static const std::regex pattern(R"([A-Za-z0-9._-]+)");
  return id != "." && id != ".." && std::regex_match(id, pattern);
}

std::vector<std::string> CaseService::case_ids() const {
  std::vector<std::string> ids;
  if (!fs::is_directory(root_)) return ids;
  for (const auto& entry : fs::directory_iterator(root_)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_directory() && valid_case_id(name)) ids.push_back(name);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::optional<CaseLayout> CaseService::find_case(const std::string& id) const {
  if (!valid_case_id(id) || !fs::is_directory(root_ / id)) return std::nullopt;
  return CaseLayout(root_ / id);
}

CaseService::CaseState& CaseService::state(const std::string& id) const {
  std::lock_guard lock(states_mutex_);
  auto& slot = states_[id];
  if (!slot) slot = std::make_unique<CaseState>();
  return *slot;
}

int CaseService::microus_slice_count(const CaseLayout& layout) const {
  if (const int n = layout.microus_count(); n > 0) return n;
  if (!fs::exists(layout.manifest())) return 0;
  // Before reconstruction the slice count follows from the manifest geometry.
  try {
    const json m = json::parse(read_text_file(layout.manifest()));
    const double w = m.at("frame_width_px").get<double>() * m.at("pixel_spacing_mm").get<double>();
    return static_cast<int>(std::ceil(w / pipeline_.volume.through_plane_mm - 1e-9));
  } catch (const json::exception&) {
    return 0;
  }
}

ServiceResponse CaseService::list_cases() const { return json_response(200, case_ids()); }

ServiceResponse CaseService::get_case(const std::string& id) const {
  const auto layout = find_case(id);
  if (!layout) return error_response(404, "unknown case: " + id);
  json body = {{"id", id},
               {"microus_slices", microus_slice_count(*layout)},
               {"histology_slices", layout->histology_count()},
               {"correspondence", nullptr},
               {"has_report", fs::exists(layout->report_json())}};
  if (fs::exists(layout->correspondence())) {
    try {
      body["correspondence"] = json::parse(read_text_file(layout->correspondence()));
    } catch (const json::exception&) {
    }
  }
  CaseState& s = state(id);
  {
    std::lock_guard lock(s.write);
    body["registration"] = s.busy ? "running" : s.last_status;
  }
  return json_response(200, body);
}

ServiceResponse CaseService::get_microus_slice(const std::string& id, int k) const {
  const auto layout = find_case(id);
  if (!layout) return error_response(404, "unknown case: " + id);
  const int count = microus_slice_count(*layout);
  if (k < 0 || k >= count) return error_response(404, "micro-US slice out of range");
  return file_response(layout->axial_slice(k, count), "image/png");
}

ServiceResponse CaseService::get_histology(const std::string& id, int n) const {
  const auto layout = find_case(id);
  if (!layout) return error_response(404, "unknown case: " + id);
  const int count = layout->histology_count();
  if (n < 0 || n >= count) return error_response(404, "histology slice out of range");
  return file_response(layout->histology_slice(n, count), "image/png");
}

ServiceResponse CaseService::get_correspondence(const std::string& id) const {
  const auto layout = find_case(id);
  if (!layout) return error_response(404, "unknown case: " + id);
  return file_response(layout->correspondence(), "application/json");
}

ServiceResponse CaseService::put_correspondence(const std::string& id, const std::string& body) {
  const auto layout = find_case(id);
  if (!layout) return error_response(404, "unknown case: " + id);
  try {
    const Correspondence c = correspondence_from_json(body);
    propagate_correspondence(c, layout->histology_count(), microus_slice_count(*layout));
  } catch (const ValidationError& e) {
    return error_response(422, e.what());
  }
  const std::string stored = json::parse(body).dump(2) + "\n";
  CaseState& s = state(id);
  std::lock_guard lock(s.write);
  write_file_atomic(layout->correspondence(), stored);
  return {200, "application/json", stored};
}

ServiceResponse CaseService::register_case(const std::string& id) {
  const auto layout = find_case(id);
  if (!layout) return error_response(404, "unknown case: " + id);
  CaseState& s = state(id);
  {
    std::lock_guard lock(s.write);
    if (s.busy) return error_response(409, "registration already running for " + id);
    s.busy = true;
  }
  ServiceResponse response;
  std::string status;
  try {
    PipelineConfig config = pipeline_;
    config.root = layout->root();
    const CaseRunResult result = run_case(config);
    status = "completed";
    response = {200, "application/json", report_to_json(result)};
  } catch (const ValidationError& e) {
    status = std::string("failed: ") + e.what();
    response = error_response(422, e.what());
  } catch (const std::exception& e) {
    status = std::string("failed: ") + e.what();
    response = error_response(500, e.what());
  }
  std::lock_guard lock(s.write);
  s.busy = false;
  s.last_status = status;
  return response;
}

ServiceResponse CaseService::get_overlay(const std::string& id, int n) const {
  const auto layout = find_case(id);
  if (!layout) return error_response(404, "unknown case: " + id);
  const int count = layout->histology_count();
  if (n < 0 || n >= count) return error_response(404, "histology slice out of range");
  return file_response(layout->overlay(n, count), "image/png");
}

ServiceResponse CaseService::get_report(const std::string& id) const {
  const auto layout = find_case(id);
  if (!layout) return error_response(404, "unknown case: " + id);
  return file_response(layout->report_json(), "application/json");
}

// ---- HTTP ------------------------------------------------------------------------

struct HttpService::Impl {
  CaseService service;
  ServeOptions options;
  httplib::Server server;
  std::thread worker;

  Impl(fs::path root, ServeOptions opts)
      : service(std::move(root), opts.pipeline), options(std::move(opts)) {
    auto reply = [](httplib::Response& res, const ServiceResponse& r) {
      res.status = r.status;
      res.set_content(r.body, r.content_type);
    };
    auto index = [](const httplib::Request& req, std::size_t i) {
      return std::stoi(req.matches[i].str());
    };
    const std::string id = R"(/api/cases/([^/]+))";
    server.Get("/api/cases", [this, reply](const httplib::Request&, httplib::Response& res) {
      reply(res, service.list_cases());
    });
    server.Get(id, [this, reply](const httplib::Request& req, httplib::Response& res) {
      reply(res, service.get_case(req.matches[1]));
    });
    server.Get(id + R"(/microus/slices/(\d+)\.png)",
               [this, reply, index](const httplib::Request& req, httplib::Response& res) {
                 reply(res, service.get_microus_slice(req.matches[1], index(req, 2)));
               });
    server.Get(id + R"(/histology/(\d+)\.png)",
               [this, reply, index](const httplib::Request& req, httplib::Response& res) {
                 reply(res, service.get_histology(req.matches[1], index(req, 2)));
               });
    server.Get(id + "/correspondence",
               [this, reply](const httplib::Request& req, httplib::Response& res) {
                 reply(res, service.get_correspondence(req.matches[1]));
               });
    server.Put(id + "/correspondence",
               [this, reply](const httplib::Request& req, httplib::Response& res) {
                 reply(res, service.put_correspondence(req.matches[1], req.body));
               });
    server.Post(id + "/register", [this, reply](const httplib::Request& req, httplib::Response& res) {
      reply(res, service.register_case(req.matches[1]));
    });
    server.Get(id + R"(/overlays/(\d+)\.png)",
               [this, reply, index](const httplib::Request& req, httplib::Response& res) {
                 reply(res, service.get_overlay(req.matches[1], index(req, 2)));
               });
    server.Get(id + "/report", [this, reply](const httplib::Request& req, httplib::Response& res) {
      reply(res, service.get_report(req.matches[1]));
    });
    server.set_exception_handler(
        [reply](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
          std::string what = "internal error";
          try {
            std::rethrow_exception(ep);
          } catch (const std::exception& e) {
            what = e.what();
          } catch (...) {
          }
          reply(res, error_response(500, what));
        });
    if (options.static_dir) {
      if (!server.set_mount_point("/", options.static_dir->string())) {
        throw IoError("static directory not found: " + options.static_dir->string());
      }
    }
  }
};

HttpService::HttpService(fs::path root, ServeOptions options)
    : impl_(std::make_unique<Impl>(std::move(root), std::move(options))) {}

HttpService::~HttpService() { stop(); }

int HttpService::start() {
  int port = impl_->options.port;
  if (port == 0) {
    port = impl_->server.bind_to_any_port(impl_->options.host);
  } else if (!impl_->server.bind_to_port(impl_->options.host, port)) {
    port = -1;
  }
  if (port < 0) throw IoError("cannot bind " + impl_->options.host);
  impl_->worker = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void HttpService::run() {
  if (!impl_->server.listen(impl_->options.host, impl_->options.port)) {
    throw IoError("cannot listen on " + impl_->options.host + ":" +
                  std::to_string(impl_->options.port));
  }
}

void HttpService::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->worker.joinable()) impl_->worker.join();
}

void serve(const fs::path& root, int port, const ServeOptions& options) {
  ServeOptions o = options;
  o.port = port;
  HttpService(root, o).run();
}

}  // namespace musreg
