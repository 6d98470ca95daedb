// ssr: generate data, train, evaluate and report.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

#include "ssr/config.hpp"
#include "ssr/dataset.hpp"
#include "ssr/evalmetrics.hpp"
#include "ssr/report.hpp"
#include "ssr/trainer.hpp"

namespace fs = std::filesystem;
using namespace ssr;

namespace {

std::vector<data::ClassSpec> parse_classes(const std::string& list) {
  std::vector<data::ClassSpec> out;
  std::stringstream ss(list);
  for (std::string name; std::getline(ss, name, ',');)
    if (!name.empty()) out.push_back(data::class_by_name(name));
  if (out.empty()) throw std::invalid_argument("no classes given");
  return out;
}

data::Dataset load_with_labels(const std::string& manifest, int n_labeled) {
  auto ds = data::Dataset::load(manifest);
  ds.splits = data::make_splits(ds.objects, ds.seed, n_labeled);
  return ds;
}

std::string all_class_names() {
  std::string s;
  for (const auto& c : data::default_classes()) s += (s.empty() ? "" : ",") + c.name;
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised single-view mesh reconstruction"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Render the synthetic multi-view dataset");
  std::string classes = all_class_names(), gen_out = "data";
  int n_objects = 10, gen_labeled = 2;
  std::uint64_t gen_seed = 0;
  gen->add_option("--classes", classes, "comma-separated shape classes")->capture_default_str();
  gen->add_option("--n-objects", n_objects, "objects per class")->capture_default_str();
  gen->add_option("--seed", gen_seed, "dataset seed")->capture_default_str();
  gen->add_option("--out", gen_out, "output directory")->capture_default_str();
  gen->add_option("--n-labeled", gen_labeled, "labeled objects per class in the stored split")->capture_default_str();

  // train
  auto* tr = app.add_subcommand("train", "Train a reconstructor (and matcher in ssr mode)");
  std::string config_path, mode;
  std::vector<std::string> overrides;
  tr->add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
  tr->add_option("--mode", mode, "ssr or softras-only (overrides the config)")
      ->check(CLI::IsMember({"ssr", "softras-only"}));
  std::string train_out, train_manifest;
  tr->add_option("--out", train_out, "run directory (overrides the config)");
  tr->add_option("--manifest", train_manifest, "dataset manifest (overrides the config)");
  tr->add_option("--set", overrides, "key=value override, repeatable");
  std::string keys_help = "Config keys (defaults):\n";
  for (const auto& k : config::documented_keys())
    keys_help += "  " + k.key + " = " + (k.default_value.empty() ? "\"\"" : k.default_value) + "    " + k.help + "\n";
  tr->footer(keys_help);

  // eval
  auto* ev = app.add_subcommand("eval", "Per-class 3D IoU of a checkpoint");
  std::string ckpt, eval_manifest, split = "test", eval_csv;
  int resolution = 32;
  ev->add_option("--checkpoint", ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  ev->add_option("--manifest", eval_manifest, "dataset manifest")->required()->check(CLI::ExistingFile);
  ev->add_option("--split", split, "split to evaluate")->check(CLI::IsMember({"train", "val", "test"}))->capture_default_str();
  ev->add_option("--resolution", resolution, "voxel resolution")->capture_default_str();
  ev->add_option("--out", eval_csv, "eval.csv path (default: next to the checkpoint)");

  // report
  auto* rp = app.add_subcommand("report", "Plots and summary from a run directory");
  std::string run_dir, report_out;
  rp->add_option("--run-dir", run_dir, "training run directory")->required()->check(CLI::ExistingDirectory);
  rp->add_option("--out", report_out, "output directory (default: <run-dir>/report)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const auto ds = data::generate_synthetic(parse_classes(classes), n_objects, gen_seed, gen_out, gen_labeled);
      std::cout << (ds.root / "manifest.json").string() << '\n';
    } else if (*tr) {
      auto rc = config_path.empty() ? config::RunConfig{} : config::RunConfig::load(config_path);
      for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw config::ConfigError("--set expects key=value, got '" + kv + "'");
        rc.set(kv.substr(0, eq), kv.substr(eq + 1));
      }
      if (!mode.empty()) rc.set("mode", mode);
      if (!train_out.empty()) rc.out = train_out;
      if (!train_manifest.empty()) rc.manifest = train_manifest;
      if (rc.manifest.empty()) throw config::ConfigError("no dataset manifest (set manifest or pass --manifest)");
      const auto ds = load_with_labels(rc.manifest, rc.n_labeled);
      fs::create_directories(rc.out);
      {
        std::ofstream(fs::path(rc.out) / "config.txt") << rc.to_text();
      }
      train::Trainer trainer(ds, rc.train);
      const auto res = trainer.fit(fs::path(rc.out));
      std::cerr << "best epoch " << res.best_epoch << ", validation IoU " << res.best_val_iou << '\n';
      std::cout << (fs::path(rc.out) / "best.ckpt").string() << '\n';
    } else if (*ev) {
      const auto ck = nn::load_checkpoint(ckpt);
      auto model = recon::Reconstructor::init(0);
      nn::load_prefixed(model.params(), ck.tensors, "recon/");
      auto ds = data::Dataset::load(eval_manifest);
      const auto& ids = split == "train" ? ds.splits.train : split == "val" ? ds.splits.val : ds.splits.test;
      const auto report = eval::test_iou(model, ds, ids, resolution);
      eval::write_eval_csv(report, eval_csv.empty() ? fs::path(ckpt).parent_path() / "eval.csv" : fs::path(eval_csv));
      for (const auto& cls : report.classes) std::printf("%s %.4f\n", cls.c_str(), report.per_class.at(cls));
      std::printf("mean %.4f\n", report.mean);
    } else if (*rp) {
      const auto summary = report::write_report(run_dir, report_out.empty() ? fs::path(run_dir) / "report" : fs::path(report_out));
      std::cout << summary.dump(2) << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
