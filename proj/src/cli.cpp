// Copyright 2026 The NAMformer Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "namformer/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "namformer/artifact.hpp"
#include "namformer/config.hpp"
#include "namformer/evaluation.hpp"
#include "namformer/simulation.hpp"

namespace namformer {
namespace {

// Raised for bad flags, configs and input schemas (exit 2).
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string data;
  std::string model;
  std::string truth;
  std::string stage = "uncontextualized";
  std::size_t grid = 200;
  double p = 0.1;
  std::size_t samples = 10000;
  std::size_t bins = 50;
};

RunConfig run_config(const Options& o) {
  RunConfig c = o.config.empty() ? parse_run_config("{\"schema_version\": 1}")
                                 : load_run_config(o.config);
  if (o.seed) c.set_seed(*o.seed);
  return c;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  return out;
}

std::vector<FeatureSpec> artifact_specs(const ModelArtifact& a) {
  std::vector<FeatureSpec> specs;
  for (const FeatureEncoder& f : a.encoders.features) specs.push_back(f.spec);
  return specs;
}

int cmd_simulate(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw UsageError("simulate: --out is required");
  const RunConfig config = run_config(o);
  const SimDataset sim = generate(config.simulation);
  {
    std::ofstream csv = open_output(o.out);
    write_csv(csv, sim.data, "y");
    if (!csv) throw std::runtime_error("write to '" + o.out + "' failed");
  }
  const std::string truth = o.truth.empty() ? truth_path_for(o.out) : o.truth;
  std::ofstream t = open_output(truth);
  t << "row,feature,value,effect,conditional_mean\n";
  const Dataset& d = sim.data;
  for (std::size_t j = 0; j < d.feature_count(); ++j) {
    const bool numeric = d.features[j].kind == FeatureKind::kNumeric;
    for (std::size_t r = 0; r < d.rows(); ++r) {
      t << r << ',' << d.features[j].name << ',';
      if (numeric) {
        const double x = d.columns[j].numeric[r];
        t << format_double(x) << ',' << format_double(sim.shape_values[j][r]) << ','
          << format_double(sim.conditional_mean(j + 1, x)) << '\n';
      } else {
        const std::size_t f = j - config.simulation.numeric_features + 1;
        const std::string& level = d.columns[j].levels[r];
        t << level << ',' << format_double(categorical_effect(f, level)) << ','
          << format_double(sim.conditional_mean_categorical(f, level)) << '\n';
      }
    }
  }
  if (!t) throw std::runtime_error("write to '" + truth + "' failed");
  out << "wrote " << d.rows() << " rows to " << o.out << " and truth to " << truth << "\n";
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  if (o.data.empty() || o.out.empty()) throw UsageError("train: --data and --out are required");
  const RunConfig config = run_config(o);
  const Dataset data = read_csv_file(o.data, config.feature_specs(), config.target);
  const auto [train_rows, validation_rows] = train_validation_rows(data.rows(), config.training);
  const Dataset train_split = data.subset(train_rows);
  const EncoderState encoders = fit_encoders(train_split, config.bins);
  const TrainResult result = train(data, encoders, config.training, config.model);

  save_artifact(make_artifact(result.model, encoders, train_split, config.training.seed,
                              config.training.loss, config.target),
                o.out);
  const std::string history_path =
      config.output.history.empty() ? o.out + ".history.csv" : config.output.history;
  std::ofstream h = open_output(history_path);
  h << "epoch,train_loss,validation_loss,learning_rate,wall_seconds\n";
  for (const EpochRecord& e : result.history.epochs) {
    h << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.validation_loss)
      << ',' << format_double(e.learning_rate) << ',' << format_double(e.wall_seconds) << '\n';
  }
  out << "epochs " << result.history.epochs.size() << "\n"
      << "best_epoch " << result.history.best_epoch << "\n"
      << "validation_" << to_string(config.training.loss) << ' '
      << format_double(result.history.best_validation_loss) << "\n";
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  if (o.model.empty() || o.data.empty()) throw UsageError("eval: --model and --data are required");
  const ModelArtifact a = load_artifact(o.model);
  const Dataset data = read_csv_file(o.data, artifact_specs(a), a.target);
  if (a.config.task == Task::kBinaryClassification) {
    for (double y : data.target) {
      if (y != 0.0 && y != 1.0) {
        throw UsageError("eval: classification model needs 0/1 targets in '" + a.target + "'");
      }
    }
  }
  const FoldMetrics metrics = evaluate_model(a.build_model(), encode_dataset(a.encoders, data));
  for (const auto& [name, value] : metrics) out << name << ' ' << format_double(value) << "\n";
  return kExitOk;
}

int cmd_shapes(const Options& o, std::ostream& out) {
  if (o.model.empty() || o.out.empty()) throw UsageError("shapes: --model and --out are required");
  if (o.grid < 2) throw UsageError("shapes: --grid must be at least 2");
  const ModelArtifact a = load_artifact(o.model);
  const NamFormer model = a.build_model();
  std::filesystem::create_directories(o.out);
  for (std::size_t j = 0; j < a.encoders.feature_count(); ++j) {
    const FeatureEncoder& f = a.encoders.features[j];
    const std::string path = (std::filesystem::path(o.out) / (f.spec.name + ".csv")).string();
    std::ofstream t = open_output(path);
    if (f.numeric()) {
      const auto [lo, hi] = *a.ranges[j];
      const ShapeCurve curve = extract_shape_function(model, a.encoders, j, uniform_grid(lo, hi, o.grid));
      t << "x,f_raw,f_centered\n";
      for (std::size_t i = 0; i < curve.x.size(); ++i) {
        t << format_double(curve.x[i]) << ',' << format_double(curve.raw[i]) << ','
          << format_double(curve.centered[i]) << '\n';
      }
    } else {
      const std::vector<double> values = categorical_shape(model, j);
      const std::vector<std::string>& levels = f.as_categorical().levels;
      t << "level,f\n";
      t << "<unknown>," << format_double(values[0]) << '\n';
      for (std::size_t k = 0; k < levels.size(); ++k) {
        t << levels[k] << ',' << format_double(values[k + 1]) << '\n';
      }
    }
    out << "wrote " << path << "\n";
  }
  return kExitOk;
}

int cmd_probe(const Options& o, std::ostream& out) {
  if (o.model.empty() || o.data.empty()) throw UsageError("probe: --model and --data are required");
  ProbeStage stage;
  try {
    stage = parse_probe_stage(o.stage);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("probe: --stage ") + e.what());
  }
  const ModelArtifact a = load_artifact(o.model);
  const Dataset data = read_csv_file(o.data, artifact_specs(a), a.target);
  const ProbeReport report =
      identifiability_probe(a.build_model(), a.encoders, data, stage, o.seed.value_or(0));
  out << "stage " << to_string(report.stage) << "\n" << "feature,r2\n";
  for (const FeatureScore& f : report.features) out << f.feature << ',' << format_double(f.r2) << "\n";
  out << "mean " << format_double(report.mean) << "\n";
  return kExitOk;
}

// conditional_mean column of a truth file, keyed by feature name then row.
std::map<std::string, std::map<std::size_t, double>> read_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("boundcheck: cannot open truth file '" + path + "'");
  std::string line;
  std::getline(in, line);
  const std::vector<std::string> header = split_csv_line(line);
  if (header != std::vector<std::string>{"row", "feature", "value", "effect", "conditional_mean"}) {
    throw UsageError("boundcheck: truth file '" + path + "' has an unexpected header");
  }
  std::map<std::string, std::map<std::size_t, double>> truth;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    try {
      if (cells.size() != 5) throw std::invalid_argument("expected 5 cells");
      truth[cells[1]][std::stoul(cells[0])] = std::stod(cells[4]);
    } catch (const std::exception&) {
      throw UsageError("boundcheck: truth file line " + std::to_string(line_no) + " is malformed");
    }
  }
  return truth;
}

int cmd_boundcheck(const Options& o, std::ostream& out) {
  if (o.model.empty() || o.data.empty()) {
    throw UsageError("boundcheck: --model and --data are required");
  }
  if (!(o.p > 0.0 && o.p <= 1.0)) throw UsageError("boundcheck: --p must lie in (0, 1]");
  if (o.samples < 2) throw UsageError("boundcheck: --samples must be at least 2");
  const ModelArtifact a = load_artifact(o.model);
  if (a.config.task != Task::kRegression) {
    throw UsageError(
        "boundcheck: the bound is checked for regression models under squared error only");
  }
  const Dataset data = read_csv_file(o.data, artifact_specs(a), a.target);
  std::map<std::string, std::map<std::size_t, double>> truth;
  if (!o.truth.empty()) truth = read_truth(o.truth);

  std::vector<std::optional<std::vector<double>>> means;
  std::vector<std::string> names;
  for (std::size_t j = 0; j < data.feature_count(); ++j) {
    const std::string& name = data.features[j].name;
    names.push_back(name);
    const auto it = truth.find(name);
    std::vector<double> m(data.rows());
    if (it != truth.end()) {
      for (std::size_t r = 0; r < data.rows(); ++r) {
        const auto cell = it->second.find(r);
        if (cell == it->second.end()) {
          throw UsageError("boundcheck: truth file lacks row " + std::to_string(r) + " for '" +
                           name + "'");
        }
        m[r] = cell->second;
      }
    } else if (data.features[j].kind == FeatureKind::kNumeric) {
      m = binned_conditional_mean(data.columns[j].numeric, data.target, o.bins);
    } else {
      std::map<std::string, std::pair<double, double>> level_sums;
      for (std::size_t r = 0; r < data.rows(); ++r) {
        auto& [sum, count] = level_sums[data.columns[j].levels[r]];
        sum += data.target[r];
        count += 1.0;
      }
      for (std::size_t r = 0; r < data.rows(); ++r) {
        const auto& [sum, count] = level_sums[data.columns[j].levels[r]];
        m[r] = sum / count;
      }
    }
    means.emplace_back(std::move(m));
  }
  const BoundReport report = bound_check(a.build_model(), encode_dataset(a.encoders, data), means,
                                         o.p, o.samples, o.seed.value_or(0), names);
  out << "p " << format_double(report.p) << "\n"
      << "samples " << report.samples << "\n"
      << "risk " << format_double(report.risk) << "\n"
      << "risk_se " << format_double(report.risk_se) << "\n"
      << "twice_risk " << format_double(report.twice_risk) << "\n"
      << "feature,lhs,direct_risk,mask_probability,holds\n";
  for (const FeatureBound& f : report.features) {
    out << f.feature << ',' << format_double(f.lhs) << ',' << format_double(f.direct_risk) << ','
        << format_double(f.mask_probability) << ',' << (f.holds ? "yes" : "no") << "\n";
  }
  out << "verdict " << (report.holds ? "holds" : "violated") << "\n";
  return report.holds ? kExitOk : kExitFailure;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  const std::uint64_t seed = o.seed.value_or(0);
  SimConfig sim;
  sim.n = 16;
  sim.categoricals = false;
  sim.seed = seed;
  const SimDataset data = generate(sim);
  const EncoderState encoders = fit_encoders(data.data, BinCounts{150, 4});
  ModelConfig config;
  config.embedding_dim = 8;
  config.layers = 1;
  config.heads = 1;
  config.ffn_width = 8;
  config.head_layers = {8};
  Rng rng(seed);
  const NamFormer model(config, encoders, rng);
  std::vector<double> masks;
  for (std::size_t r = 0; r < data.data.rows(); ++r) {
    const DropoutMask m = sample_mask(model.feature_count(), 0.3, rng);
    masks.insert(masks.end(), m.begin(), m.end());
  }
  const GradientCheck check = model_gradient_check(model, encode_dataset(encoders, data.data),
                                                   LossKind::kMse, masks);
  const bool ok = check.max_relative_error <= 1e-4;
  out << "coordinates " << check.coordinates << "\n"
      << "max_relative_error " << format_double(check.max_relative_error) << "\n"
      << "verdict " << (ok ? "pass" : "fail") << "\n";
  return ok ? kExitOk : kExitFailure;
}

}  // namespace

std::string truth_path_for(const std::string& csv_path) {
  std::filesystem::path p(csv_path);
  const std::string stem = p.extension() == ".csv" ? p.stem().string() : p.filename().string();
  return (p.parent_path() / (stem + ".truth.csv")).string();
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"NAMformer: neural additive transformer for tabular data", "namformer"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;
  auto add_globals = [&](CLI::App* cmd) {
    cmd->add_option("--config", o.config, "JSON run configuration");
    cmd->add_option("--seed", seed, "seed overriding the configured ones");
    cmd->add_option("--out", o.out, "output path");
  };
  auto add_model = [&](CLI::App* cmd) { cmd->add_option("--model", o.model, "model artifact"); };
  auto add_data = [&](CLI::App* cmd) { cmd->add_option("--data", o.data, "CSV dataset"); };

  CLI::App* simulate = app.add_subcommand("simulate", "generate a synthetic dataset");
  add_globals(simulate);
  simulate->add_option("--truth", o.truth, "ground-truth companion path");
  CLI::App* train_cmd = app.add_subcommand("train", "train a model on a CSV dataset");
  add_globals(train_cmd);
  add_data(train_cmd);
  CLI::App* eval = app.add_subcommand("eval", "report test metrics");
  add_globals(eval);
  add_model(eval);
  add_data(eval);
  CLI::App* shapes = app.add_subcommand("shapes", "export per-feature shape functions");
  add_globals(shapes);
  add_model(shapes);
  shapes->add_option("--grid", o.grid, "grid points per numeric feature");
  CLI::App* probe = app.add_subcommand("probe", "decision-tree probe on token embeddings");
  add_globals(probe);
  add_model(probe);
  add_data(probe);
  probe->add_option("--stage", o.stage, "uncontextualized | contextualized");
  CLI::App* bound = app.add_subcommand("boundcheck", "check the dropout risk bound");
  add_globals(bound);
  add_model(bound);
  add_data(bound);
  bound->add_option("--truth", o.truth, "truth file from simulate");
  bound->add_option("--p", o.p, "feature dropout rate");
  bound->add_option("--samples", o.samples, "Monte-Carlo samples");
  bound->add_option("--bins", o.bins, "bins for estimated conditional means");
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
  add_globals(gradcheck);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  for (CLI::App* cmd : app.get_subcommands()) {
    if (cmd->count("--seed")) o.seed = seed;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(o, out);
    if (train_cmd->parsed()) return cmd_train(o, out);
    if (eval->parsed()) return cmd_eval(o, out);
    if (shapes->parsed()) return cmd_shapes(o, out);
    if (probe->parsed()) return cmd_probe(o, out);
    if (bound->parsed()) return cmd_boundcheck(o, out);
    return cmd_gradcheck(o, out);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace namformer
