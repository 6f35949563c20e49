// boxprob: probabilistic robustness of tree-model predictions.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "boxprob/boxprob.hpp"

namespace {

struct Common {
  std::string model;
  std::string samples;
  std::string uncertainty;
  std::string format = "json";
  std::string output;
  double prune_level = 0.99;
  std::uint64_t mc_samples = 1'000'000;
  std::uint64_t seed = 0;
  double abs_tol = 1e-6;
  std::uint64_t max_boxes = 10'000'000;
  bool verbose = false;
  bool timings = false;
  bool no_fast_path = false;
};

void add_common(CLI::App& app, Common& c) {
  app.add_option("--model", c.model, "Model JSON document")->required()->check(CLI::ExistingFile);
  app.add_option("--samples", c.samples, "Samples CSV (one sample per row, optional header)")
      ->required()
      ->check(CLI::ExistingFile);
  app.add_option("--uncertainty", c.uncertainty, "Uncertainty JSON (one entry, or an array with one per sample)")
      ->required()
      ->check(CLI::ExistingFile);
  app.add_option("--prune-level", c.prune_level, "Confidence level of the pruning region")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  app.add_option("--mc-samples", c.mc_samples, "Monte-Carlo draws per sample")->capture_default_str();
  app.add_option("--seed", c.seed, "Seed for lattice shifts and Monte-Carlo draws")->capture_default_str();
  app.add_option("--abs-tol", c.abs_tol, "Absolute tolerance per box integral")->capture_default_str();
  app.add_option("--max-boxes", c.max_boxes, "Largest box stream evaluated per sample")->capture_default_str();
  app.add_option("--format", c.format, "Output format")->capture_default_str()->check(CLI::IsMember({"json", "csv"}));
  app.add_option("-o,--output", c.output, "Write the report to this file instead of stdout");
  app.add_flag("--verbose", c.verbose, "Include per-box masses");
  app.add_flag("--timings", c.timings, "Include wall time per result (makes output run-dependent)");
  app.add_flag("--no-fast-path", c.no_fast_path, "Integrate independent uncertainty with the general integrator");
}

boxprob::RunOptions options(const Common& c) {
  boxprob::RunOptions opt;
  opt.seed = c.seed;
  opt.integrator.abs_tol = c.abs_tol;
  opt.max_boxes = c.max_boxes;
  opt.threads = boxprob::default_thread_count();
  opt.verbose = c.verbose;
  opt.timings = c.timings;
  opt.fast_path = !c.no_fast_path;
  return opt;
}

int emit(const Common& c, const boxprob::RunReport& report) {
  const std::string text =
      c.format == "csv" ? boxprob::report_to_csv(report, c.timings) : boxprob::report_to_json(report, c.timings).dump(2) + "\n";
  if (c.output.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(c.output, std::ios::binary);
    if (!out) throw boxprob::Error(c.output + ": cannot open for writing");
    out << text;
  }
  for (const auto& s : report.samples) {
    for (const auto& r : s.results) {
      if (r.error) std::cerr << "sample " << s.sample_id << " (" << r.method << "): " << *r.error << "\n";
    }
  }
  for (const auto& check : report.pruning_checks) {
    for (std::size_t id : check.violations) {
      std::cerr << "sample " << id << ": full - " << check.method << " outside [0, " << check.bound << "]\n";
    }
  }
  return report.failures > 0 ? 2 : 0;
}

int run(const Common& c, const std::vector<boxprob::Method>& methods) {
  const auto model = boxprob::load_model(c.model);
  const auto rows = boxprob::load_samples_csv(c.samples);
  const auto uncertainty = boxprob::load_uncertainty(c.uncertainty);
  return emit(c, boxprob::run_batch(model, rows, uncertainty, methods, options(c)));
}

int inspect(const std::string& path, bool as_json) {
  const auto model = boxprob::load_model(path);
  const auto ts = boxprob::build_threshold_sets(model);
  const auto count = boxprob::count_boxes(ts);
  std::size_t depth = 0;
  for (const auto& t : model.trees()) depth = std::max(depth, t.depth());
  std::size_t rules = 0;
  boxprob::for_each_split_rule(model, [&](const boxprob::SplitRule&) { ++rules; });
  const char* kind = std::holds_alternative<boxprob::DecisionTree>(model.ensemble)  ? "decision_tree"
                     : std::holds_alternative<boxprob::Forest>(model.ensemble)       ? "random_forest"
                                                                                     : "boosted_ensemble";
  std::vector<std::size_t> tau;
  for (const auto& t : ts.tau) tau.push_back(t.size());
  if (as_json) {
    nlohmann::ordered_json j;
    j["type"] = kind;
    j["n_features"] = model.n_features;
    j["n_classes"] = model.n_classes;
    j["trees"] = model.trees().size();
    j["max_depth"] = depth;
    j["split_rules"] = rules;
    j["thresholds_per_feature"] = tau;
    j["n_boxes"] = count.overflow ? nlohmann::ordered_json(count.to_string()) : nlohmann::ordered_json(count.value);
    j["overflow"] = count.overflow;
    std::cout << j.dump(2) << "\n";
    return 0;
  }
  std::cout << "type            " << kind << "\n"
            << "features        " << model.n_features << "\n"
            << "classes         " << model.n_classes << "\n"
            << "trees           " << model.trees().size() << "\n"
            << "max depth       " << depth << "\n"
            << "split rules     " << rules << "\n"
            << "|tau_i|         ";
  for (std::size_t i = 0; i < tau.size(); ++i) std::cout << (i ? " " : "") << tau[i];
  std::cout << "\nboxes (n_b)     " << count.to_string() << "\n"
            << "overflow        " << (count.overflow ? "yes" : "no") << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic robustness of tree-model predictions under input uncertainty.\n"
               "Worker threads: BOXPROB_THREADS (default: hardware concurrency)."};
  app.require_subcommand(1);

  Common compute_opts;
  std::string method = "full";
  auto* compute = app.add_subcommand("compute", "Robustness of every sample with one method");
  add_common(*compute, compute_opts);
  compute->add_option("--method", method, "full | pruned | mc")->capture_default_str()->check(
      CLI::IsMember({"full", "pruned", "mc"}));

  Common compare_opts;
  std::string methods = "full,pruned";
  auto* compare = app.add_subcommand(
      "compare",
      "Run several methods per sample and report agreement. R^2 = 1 - sum((y-x)^2) / sum((y-mean(y))^2) "
      "with x the first method, i.e. agreement with the identity line, not a fitted regression.");
  add_common(*compare, compare_opts);
  compare->add_option("--methods", methods, "Comma-separated: full, pruned[:level], mc[:n]")->capture_default_str();

  std::string inspect_model;
  bool inspect_json = false;
  auto* insp = app.add_subcommand("inspect", "Summarize a model and its box partition");
  insp->add_option("--model", inspect_model, "Model JSON document")->required()->check(CLI::ExistingFile);
  insp->add_flag("--json", inspect_json, "Print JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*compute) {
      return run(compute_opts, {boxprob::parse_method(method, compute_opts.prune_level, compute_opts.mc_samples)});
    }
    if (*compare) {
      std::vector<boxprob::Method> list;
      std::string_view rest = methods;
      while (!rest.empty()) {
        const auto comma = rest.find(',');
        list.push_back(boxprob::parse_method(rest.substr(0, comma), compare_opts.prune_level, compare_opts.mc_samples));
        rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
      }
      if (list.size() < 2) throw boxprob::InvalidArgument("compare needs at least two methods");
      return run(compare_opts, list);
    }
    return inspect(inspect_model, inspect_json);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
