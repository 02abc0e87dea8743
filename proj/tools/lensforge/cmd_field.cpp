#include <chrono>
#include <fstream>

#include <spdlog/spdlog.h>

#include "lensforge/common.hpp"
#include "lensforge/error.hpp"

namespace lensforge::cli {
namespace {

struct FitArgs {
  std::vector<std::string> psflibs;
  std::string out = "field.olf";
  std::string metrics;
  std::optional<int> input_width, hidden_layers, hidden_width;
  std::optional<std::string> depth_norm;
  std::optional<int> iterations, batch, eval_every;
  std::optional<double> lr, weight_decay, holdout;
  std::uint64_t seed = 1;
  std::vector<int> sweep;
};

std::string with_suffix(const std::filesystem::path& p, const std::string& suffix) {
  return (p.parent_path() / (p.stem().string() + suffix + p.extension().string())).string();
}

void run(const FitArgs& a, const GlobalOptions& g) {
  std::vector<PsfLibrary> libs;
  for (const auto& p : a.psflibs) libs.push_back(load_psflib(p));
  std::vector<const PsfLibrary*> ptrs;
  std::size_t library_bytes = 0;
  for (std::size_t i = 0; i < libs.size(); ++i) {
    ptrs.push_back(&libs[i]);
    library_bytes += std::filesystem::file_size(a.psflibs[i]);
  }

  FieldConfig fc = preset_field(g.preset, static_cast<int>(libs.size()));
  fc.k = libs.front().k();
  if (a.input_width) fc.input_width = *a.input_width;
  if (a.hidden_layers) fc.hidden_layers = *a.hidden_layers;
  if (a.hidden_width) fc.hidden_width = *a.hidden_width;
  if (a.depth_norm) fc.depth_norm = *a.depth_norm == "inverse" ? DepthNormalization::Inverse : DepthNormalization::Linear;
  fc.validate();
  TrainConfig tc = preset_train(g.preset);
  if (a.iterations) tc.iterations = *a.iterations;
  if (a.batch) tc.batch_size = *a.batch;
  if (a.eval_every) tc.eval_every = *a.eval_every;
  if (a.lr) tc.learning_rate = *a.lr;
  if (a.weight_decay) tc.weight_decay = *a.weight_decay;
  if (a.holdout) tc.holdout_fraction = *a.holdout;
  tc.seed = a.seed;

  json libs_json = json::array();
  for (const auto& l : libs) libs_json.push_back(l.lens_id());
  json config{{"libraries", libs_json},
              {"input_width", fc.input_width},
              {"hidden_layers", fc.hidden_layers},
              {"hidden_width", fc.hidden_width},
              {"k", fc.k},
              {"depth_norm", fc.depth_norm == DepthNormalization::Linear ? "linear" : "inverse"},
              {"iterations", tc.iterations},
              {"batch", tc.batch_size},
              {"learning_rate", tc.learning_rate},
              {"weight_decay", tc.weight_decay},
              {"holdout", tc.holdout_fraction},
              {"eval_every", tc.eval_every},
              {"seed", tc.seed},
              {"preset", g.preset}};
  if (!a.sweep.empty()) config["sweep_hidden_layers"] = a.sweep;
  Manifest manifest("fit-field", config);

  const std::filesystem::path out(a.out);
  ensure_parent_dir(out);
  const std::filesystem::path metrics =
      a.metrics.empty() ? std::filesystem::path(out.parent_path() / (out.stem().string() + "_metrics.csv")) : std::filesystem::path(a.metrics);
  ensure_parent_dir(metrics);
  std::ofstream csv(metrics);
  if (!csv) throw Error("cannot write " + metrics.string());

  auto fit = [&](FieldConfig cfg, const std::filesystem::path& model_path, std::ofstream& log, const std::string& prefix) {
    const auto t0 = std::chrono::steady_clock::now();
    TrainResult r = field_train(ptrs, cfg, tc, [&](const TrainRecord& rec) {
      log << prefix << rec.iteration << ',' << rec.loss << ',' << rec.train_psnr << ',' << rec.heldout_psnr << ','
          << rec.learning_rate << '\n';
      spdlog::info("{}it {} loss {:.3e} train {:.2f} dB held-out {:.2f} dB", prefix, rec.iteration, rec.loss,
                   rec.train_psnr, rec.heldout_psnr);
    });
    r.model.lens_ids.clear();
    for (const auto& l : libs) r.model.lens_ids.push_back(l.lens_id());
    save_field(r.model, model_path);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest.add_output(model_path, {{"hidden_layers", cfg.hidden_layers},
                                     {"parameters", r.model.parameter_count()},
                                     {"heldout_psnr", r.final_heldout_psnr},
                                     {"train_psnr", r.final_train_psnr},
                                     {"library_bytes", library_bytes}});
    spdlog::info("{} parameters, {} bytes ({:.2f}% of library bytes), {:.1f} s", r.model.parameter_count(),
                 field_file_size(r.model), 100.0 * field_file_size(r.model) / library_bytes, secs);
    return r;
  };

  if (a.sweep.empty()) {
    csv << "iteration,loss,train_psnr,heldout_psnr,learning_rate\n";
    fit(fc, out, csv, "");
  } else {
    csv << "hidden_layers,iteration,loss,train_psnr,heldout_psnr,learning_rate\n";
    const std::filesystem::path summary_path(out.parent_path() / (out.stem().string() + "_sweep.csv"));
    std::ofstream summary(summary_path);
    summary << "hidden_layers,parameters,model_bytes,library_bytes,train_psnr,heldout_psnr\n";
    for (int n : a.sweep) {
      FieldConfig cfg = fc;
      cfg.hidden_layers = n;
      cfg.validate();
      const auto path = with_suffix(out, "_N" + std::to_string(n));
      const TrainResult r = fit(cfg, path, csv, std::to_string(n) + ",");
      summary << n << ',' << r.model.parameter_count() << ',' << field_file_size(r.model) << ',' << library_bytes
              << ',' << r.final_train_psnr << ',' << r.final_heldout_psnr << '\n';
    }
    summary.close();
    manifest.add_output(summary_path);
  }
  csv.close();
  manifest.add_output(metrics);
  manifest.write(out.string() + ".manifest.json");
}

}  // namespace

void register_fit_field(CLI::App& app, const GlobalOptions& global) {
  auto args = std::make_shared<FitArgs>();
  auto* cmd = app.add_subcommand("fit-field", "Fit a neural lens field to one or more PSF libraries");
  cmd->add_option("--psflib", args->psflibs, "PSF library files; their order defines the lens index")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("-o,--out", args->out, "Output model file")->capture_default_str();
  cmd->add_option("--metrics", args->metrics, "Metrics CSV (default <out stem>_metrics.csv)");
  cmd->add_option("--input-width", args->input_width, "Input layer width")->check(CLI::PositiveNumber);
  cmd->add_option("--hidden-layers", args->hidden_layers, "Hidden layer count")->check(CLI::NonNegativeNumber);
  cmd->add_option("--hidden-width", args->hidden_width, "Hidden layer width")->check(CLI::PositiveNumber);
  cmd->add_option("--depth-norm", args->depth_norm, "Depth input mapping")
      ->check(CLI::IsMember({"linear", "inverse"}));
  cmd->add_option("--iterations", args->iterations, "Training iterations")->check(CLI::NonNegativeNumber);
  cmd->add_option("--batch", args->batch, "Cells per iteration")->check(CLI::PositiveNumber);
  cmd->add_option("--eval-every", args->eval_every, "Iterations between metric records")->check(CLI::PositiveNumber);
  cmd->add_option("--lr", args->lr, "Initial learning rate")->check(CLI::NonNegativeNumber);
  cmd->add_option("--weight-decay", args->weight_decay, "Decoupled weight decay")->check(CLI::NonNegativeNumber);
  cmd->add_option("--holdout", args->holdout, "Held-out cell fraction")->check(CLI::Range(0.0, 0.9));
  cmd->add_option("--seed", args->seed, "Initialization and sampling seed")->capture_default_str();
  cmd->add_option("--sweep-hidden", args->sweep,
                  "Fit one model per hidden layer count and write <out stem>_sweep.csv")
      ->delimiter(',');
  cmd->callback([args, &global] { run(*args, global); });
}

}  // namespace lensforge::cli
