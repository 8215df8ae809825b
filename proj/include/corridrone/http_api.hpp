#pragma once

// JSON request/response API over a Service, shared by the HTTP server and the
// C API's in-process calls.
//
//   GET  /health
//   GET  /missions                         [{id, status}]
//   POST /missions                         MissionRequest -> {id, status}
//   GET  /missions/{id}                    MissionRecord
//   POST /missions/{id}/options            {wind?, zones?} -> {options}
//   POST /missions/{id}/negotiate          {option_id?} -> {allocation, status}
//   POST /missions/{id}/activate           {sim?} -> {status}
//   POST /missions/{id}/commands           OperatorCommand -> {status}
//   POST /missions/{id}/inject             Injection -> {status}
//   POST /missions/{id}/step               {steps?} -> {status, step, uavs}
//   POST /missions/{id}/complete           -> MissionRecord
//   GET  /missions/{id}/uavs               live UAV states
//   GET  /missions/{id}/stream?since=N&limit=M&wait_ms=T
//                                          {entries, last_seq}
//   GET  /missions/{id}/events             server-sent events (HTTP only);
//                                          resumes after Last-Event-ID
//   GET  /clock, POST /clock {now}         mission clock (POST: manual only)
//
// Errors: {"error": <code>, "message", "details"} with a 4xx/5xx status.

#include <atomic>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include "corridrone/error.hpp"
#include "corridrone/gcs_service.hpp"

namespace corridrone::api {

struct Response {
  int status = 200;
  std::string body;
};

int http_status(Errc code);
std::string error_body(const Error& e);

class Api {
 public:
  // `set_clock` enables POST /clock.
  explicit Api(gcs::Service& service, std::function<void(double)> set_clock = {});

  Response handle(const std::string& method, const std::string& target,
                  const std::string& body);
  gcs::Service& service() { return service_; }

 private:
  Response route(const std::string& method, const std::string& path,
                 const std::map<std::string, std::string>& query, const io::json& body);

  gcs::Service& service_;
  std::function<void(double)> set_clock_;
};

class HttpServer {
 public:
  // port 0 picks a free port. Starts listening before returning.
  HttpServer(Api& api, const std::string& host, int port);
  ~HttpServer();
  int port() const { return port_; }
  void stop();
  void wait();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

}  // namespace corridrone::api
