#pragma once

// Binds the service handlers to an httplib server. Requires linking pthread.

#include <optional>
#include <string>

#include "httplib.h"

#include "buscbm/service.hpp"

namespace buscbm {

inline void mount_service(httplib::Server& server, const Service& service, const std::string& cors_origin = "*") {
  server.set_default_headers({{"Access-Control-Allow-Origin", cors_origin},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});
  auto reply = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  auto param = [](const httplib::Request& req, const char* key) -> std::optional<std::string> {
    if (!req.has_param(key)) return std::nullopt;
    return req.get_param_value(key);
  };
  server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  server.Get("/healthz", [&service, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, service.healthz());
  });
  server.Get("/api/cases", [&service, reply, param](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.list_cases(param(req, "page"), param(req, "page_size")));
  });
  server.Get(R"(/api/cases/([^/]+))", [&service, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.get_case(httplib::detail::decode_url(req.matches[1].str(), false)));
  });
  server.Post("/api/intervene", [&service, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.intervene(req.body));
  });
  server.Post("/api/predict", [&service, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.predict(req.body));
  });
}

}  // namespace buscbm
