// Copyright 2026 The Surrogate Authors
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

#pragma once

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "experiment.hpp"

namespace surrogate::cli {

namespace detail {

inline std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

}  // namespace detail

/// Entry point shared by the executable and the tests. Diagnostics go to
/// `err` as a single line; a one-line summary goes to `out` on success.
inline int run_cli(int argc, const char* const* argv, std::ostream& out,
                   std::ostream& err) {
  CLI::App app{"Surrogate-field validity, sampling and simulation runner",
               "surrogate_cli"};
  app.require_subcommand(1);
  app.set_version_flag("--version", SURROGATE_VERSION);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string method;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"validity", "quasi-probability tables and validity verdicts"},
      {"sample", "draw surrogate field trajectories"},
      {"simulate", "Monte Carlo average of the system under the surrogate"},
      {"compare", "surrogate average against exact joint evolution"},
      {"diagnostics", "back-action, entanglement and moment diagnostics"},
      {"dyson", "truncated Dyson series against exact evolution"},
      {"run", "run whatever mode the config declares"}};
  std::vector<CLI::App*> subs;
  std::vector<CLI::Option*> seed_opts, threads_opts, method_opts, out_opts;
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "experiment config (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    out_opts.push_back(sub->add_option("--out", out_dir, "output directory"));
    threads_opts.push_back(
        sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber));
    seed_opts.push_back(sub->add_option("--seed", seed, "RNG seed (overrides config)"));
    method_opts.push_back(sub->add_option("--method", method, "trajectory evolution")
                              ->check(CLI::IsMember({"exact-step", "euler"})));
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << detail::one_line(e.what()) << '\n';
    return kExitValidation;
  }

  std::size_t which = 0;
  while (which < subs.size() && !subs[which]->parsed()) ++which;
  const std::string& command = commands[which].first;

  Overrides o;
  if (seed_opts[which]->count() > 0) o.seed = seed;
  if (threads_opts[which]->count() > 0) o.threads = threads;
  if (method_opts[which]->count() > 0) o.method = parse_method(method);
  if (out_opts[which]->count() > 0) o.out = out_dir;

  try {
    const ExperimentConfig cfg = apply_overrides(load_config(config_path), o);
    if (command != "run" && command != to_string(cfg.mode)) {
      throw ConfigError("mode: config declares \"" + to_string(cfg.mode) +
                        "\" but the command is \"" + command + "\"");
    }
    const json manifest = run(cfg);
    out << to_string(cfg.mode) << ": wrote " << manifest["outputs"].size() + 1
        << " files to " << cfg.output_dir << '\n';
    return kExitOk;
  } catch (const ValidationError& e) {
    err << "error: " << detail::one_line(e.what()) << '\n';
    return kExitValidation;
  } catch (const BudgetError& e) {
    err << "budget: " << detail::one_line(e.what()) << '\n';
    return kExitBudget;
  } catch (const std::exception& e) {
    err << "failure: " << detail::one_line(e.what()) << '\n';
    return kExitIo;
  }
}

}  // namespace surrogate::cli
