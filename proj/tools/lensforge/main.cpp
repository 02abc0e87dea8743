#include <cstdio>
#include <memory>
#include <thread>

#include <tbb/global_control.h>

#include "lensforge/common.hpp"
#include "lensforge/error.hpp"
#include "lensforge/logging.hpp"

namespace {

using lensforge::cli::json;

enum ExitCode { kOk = 0, kFailure = 1, kValidation = 2, kTrace = 3 };

int report(const char* kind, const std::string& message, int code) {
  const json line{{"error", kind}, {"message", message}, {"exit_code", code}};
  std::fprintf(stderr, "%s\n", line.dump().c_str());
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace lensforge;
  CLI::App app{"Depth-aware lens simulation: PSF tracing, PSF libraries, aberration simulation, "
               "neural lens fields and controllable depth-of-field rendering."};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML or INI configuration file; command-line flags take precedence");

  cli::GlobalOptions global;
  app.add_option("--preset", global.preset, "Parameter preset")
      ->check(CLI::IsMember({"desk", "full"}))
      ->capture_default_str();
  app.add_option("-j,--workers", global.workers, "Worker threads (0 = available parallelism)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  app.add_option("--log-level", global.log_level,
                 "trace, debug, info, warn, error or off (overrides LENSFORGE_LOG)");

  cli::register_trace(app, global);
  cli::register_build_psflib(app, global);
  cli::register_simulate(app, global);
  cli::register_fit_field(app, global);
  cli::register_render(app, global);
  cli::register_serve(app, global);

  std::unique_ptr<tbb::global_control> workers;
  app.parse_complete_callback([&] {
    init_logging();
    if (!global.log_level.empty()) set_log_level(global.log_level);
    if (global.workers > 0) {
      workers = std::make_unique<tbb::global_control>(tbb::global_control::max_allowed_parallelism,
                                                      static_cast<std::size_t>(global.workers));
    }
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report("usage", e.what(), kValidation);
  } catch (const ValidationError& e) {
    return report("validation", e.what(), kValidation);
  } catch (const ParseError& e) {
    return report("validation", e.what(), kValidation);
  } catch (const TraceError& e) {
    return report("trace", e.what(), kTrace);
  } catch (const FormatError& e) {
    return report("format", e.what(), kFailure);
  } catch (const std::exception& e) {
    return report("failure", e.what(), kFailure);
  }
  return kOk;
}
