#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "schoolrun/ingest.hpp"
#include "schoolrun/ols.hpp"
#include "schoolrun/scoring.hpp"

namespace schoolrun::serve {

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

// Read-only view over one run directory. All state is fixed by load(); handle()
// is const and safe to call from concurrent request threads.
class ApiService {
 public:
  // Never throws: a missing or mixed-version artifact set is kept as the load
  // error and every request is then answered with 409.
  static ApiService load(const std::filesystem::path& artifacts);

  bool ready() const noexcept { return !load_error_; }
  const std::optional<nlohmann::json>& load_error() const noexcept { return load_error_; }

  ApiResponse handle(std::string_view method, std::string_view path,
                     const std::map<std::string, std::string>& query = {},
                     std::string_view body = {}) const;

 private:
  void init(const std::filesystem::path& dir);

  ApiResponse schools() const;
  ApiResponse school(const std::string& id) const;
  ApiResponse whatif(std::string_view body) const;
  ApiResponse model() const;
  ApiResponse interactions(const std::map<std::string, std::string>& query) const;

  // Baseline or what-if evaluation of one school from its full Z vector.
  nlohmann::json evaluate(std::size_t row, const Eigen::VectorXd& z_all) const;
  Eigen::VectorXd model_z(const Eigen::VectorXd& z_all) const;

  std::optional<nlohmann::json> load_error_;
  NeighborhoodPanel panel_;
  ZScoreStats stats_;  // all 25 features, training statistics
  OlsFit fit_;
  ScoringFunction scoring_;
  std::vector<std::size_t> model_columns_;  // fit feature k -> index into stats_
  Eigen::MatrixXd z_model_;                 // panel rows on the fit's features
  Eigen::VectorXd background_mean_;
  double phi0_ = 0.0;
  nlohmann::json precomputed_interactions_;
};

// HTTP/1.1 front end over an ApiService. Port 0 binds an ephemeral port.
class HttpServer {
 public:
  HttpServer(const ApiService& api, std::string host, int port);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Throws InvalidArgument when the address cannot be bound.
  int bind();
  // Blocks until stop() is called from another thread.
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// bind() then listen().
void run_http(const ApiService& api, const std::string& host, int port);

// "host:port" or ":port"; defaults host to 127.0.0.1.
std::pair<std::string, int> parse_bind(const std::string& bind);

}  // namespace schoolrun::serve
