// Experiment runner: uge <generate|train|evaluate|sweep> <config> [options]
// Exit codes: 0 success, 1 validation error, 2 runtime failure.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "uge/uge.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Unbiased graph embedding experiments"};
  app.require_subcommand(1);

  std::string config_path;
  unsigned threads = 1;
  bool overwrite = false;
  bool print_config = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", config_path, "Experiment config (key = value lines)")->required();
    sub->add_option("-j,--threads", threads, "Worker threads; results do not depend on this")
        ->check(CLI::PositiveNumber);
    sub->add_flag("--overwrite", overwrite, "Replace existing outputs in out_dir");
    sub->add_flag("--print-config", print_config, "Print the normalized config and its hash, then exit");
  };
  auto* gen = app.add_subcommand("generate", "Sample a planted synthetic graph and its ground-truth ratios");
  auto* trn = app.add_subcommand("train", "Train embeddings for every configured regime");
  auto* evl = app.add_subcommand("evaluate", "Evaluate stored embeddings");
  auto* swp = app.add_subcommand("sweep", "Train and evaluate UGE-C over the lambda grid");
  for (auto* s : {gen, trn, evl, swp}) add_common(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const auto cfg = uge::load_config(config_path);
    if (print_config) {
      std::cout << cfg.canonical() << "# hash " << cfg.hash() << '\n';
      return 0;
    }
    uge::RunOptions opt;
    opt.threads = threads;
    opt.overwrite = overwrite;
    if (gen->parsed()) {
      uge::cmd_generate(cfg, opt);
    } else if (trn->parsed()) {
      uge::cmd_train(cfg, opt);
    } else if (evl->parsed()) {
      for (const auto& r : uge::cmd_evaluate(cfg, opt))
        for (const auto& row : uge::report_csv_rows(r)) std::cout << row << '\n';
    } else if (swp->parsed()) {
      uge::cmd_sweep(cfg, opt);
      std::cout << uge::detail::read_file(std::filesystem::path(cfg.out_dir) / "sweep.csv");
    }
  } catch (const uge::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
