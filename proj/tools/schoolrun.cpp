#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "schoolrun/error.hpp"
#include "schoolrun/pipeline.hpp"
#include "schoolrun/serve.hpp"
#include "schoolrun/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace schoolrun;

namespace {

int fail(std::string_view code, const std::string& message, int status) {
  std::cerr << json{{"error", std::string(code)}, {"message", message}}.dump() << "\n";
  return status;
}

void print_warnings(const Warnings& warnings) {
  for (const auto& w : warnings) {
    std::cerr << json{{"warning", std::string(warning_code_name(w.code))}, {"message", w.message}}.dump()
              << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"School-run congestion pipeline"};
  app.require_subcommand(1);

  std::uint64_t seed = 7;
  std::string config_path, out_dir = "run", inputs, artifacts, bind = "127.0.0.1:8080";
  bool full_scale = false;
  app.add_option("--seed", seed, "Random seed")->capture_default_str();
  app.add_option("--config", config_path, "JSON config file");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic city as pipeline inputs");
  synth->add_option("--out-dir", out_dir, "Directory for the generated inputs")->capture_default_str();
  synth->add_flag("--full-scale", full_scale, "Keep every observation slot");

  std::function<void(pipeline::Context&)> stage;
  for (const auto& [name, fn] : std::initializer_list<std::pair<const char*, void (*)(pipeline::Context&)>>{
           {"ingest", pipeline::run_ingest},
           {"scenescape", pipeline::run_scenescape},
           {"features", pipeline::run_features},
           {"fit-m1", pipeline::run_fit_m1},
           {"fit-m2", pipeline::run_fit_m2},
           {"shap", pipeline::run_shap},
           {"score", pipeline::run_score},
           {"report", pipeline::run_report},
           {"run", pipeline::run_all}}) {
    auto* sub = app.add_subcommand(name, name == std::string("run") ? "Run every stage in order"
                                                                    : std::string("Run the ") + name + " stage");
    sub->add_option("--out-dir", out_dir, "Run directory for artifacts")->capture_default_str();
    sub->add_option("--inputs", inputs, "Input directory (default: recorded by ingest)");
    auto* f = fn;
    sub->callback([&stage, f] { stage = f; });
  }

  auto* serve = app.add_subcommand("serve", "Serve the what-if API over HTTP");
  serve->add_option("--artifacts", artifacts, "Run directory to serve")->required();
  serve->add_option("--bind", bind, "host:port")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("UsageError", e.what(), 1);
  }

  try {
    json config = json::object();
    if (!config_path.empty()) config = pipeline::load_config(config_path);

    if (synth->parsed()) {
      auto spec = synth::SynthSpec::from_json(config.value("synth", json::object()));
      spec.seed = seed;
      if (full_scale) spec.full_scale = true;
      Warnings warnings;
      const auto data = synth::generate(spec, &warnings);
      synth::write_inputs(data, out_dir);
      print_warnings(warnings);
      std::cout << json{{"inputs", out_dir}, {"schools", data.city.schools.size()},
                        {"observations", data.observations.size()}}.dump()
                << "\n";
      return 0;
    }

    if (serve->parsed()) {
      const auto api = serve::ApiService::load(artifacts);
      if (!api.ready()) std::cerr << api.load_error()->dump() << "\n";
      const auto [host, port] = serve::parse_bind(bind);
      serve::HttpServer server(api, host, port);
      const int bound = server.bind();
      std::cout << json{{"listening", host + ":" + std::to_string(bound)}, {"ready", api.ready()}}.dump()
                << std::endl;
      server.listen();
      return 0;
    }

    pipeline::Context ctx;
    ctx.out_dir = out_dir;
    ctx.inputs_dir = inputs;
    ctx.seed = seed;
    ctx.config = config;
    stage(ctx);
    print_warnings(ctx.warnings);
    std::cout << json{{"out_dir", out_dir}, {"manifest", (fs::path(out_dir) / pipeline::kRunManifest).string()}}
                     .dump()
              << "\n";
    return 0;
  } catch (const Error& e) {
    return fail(error_code_name(e.code()), e.what(), e.code() == ErrorCode::kMissingArtifact ? 2 : 1);
  } catch (const std::exception& e) {
    return fail("InternalError", e.what(), 1);
  }
}
