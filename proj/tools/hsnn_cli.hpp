#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hsnn/energy.hpp"
#include "hsnn/pipeline.hpp"
#include "hsnn/pipeline/gradcheck_suite.hpp"

namespace hsnn::cli {

/// Flags shared by every model-building subcommand; unset flags leave the
/// preset/config value alone.
struct ModelFlags {
  std::string config_path;
  std::string preset;
  std::string arch;
  std::string neuron;
  std::uint64_t seed = 0;
  std::size_t clips = 0, segments = 0, bottleneck_dim = 0, num_classes = 0;
  bool no_mbf = false;
  bool seed_set = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
    app->add_option("--preset", preset, "tiny or paper")->check(CLI::IsMember({"tiny", "paper"}));
    app->add_option("--arch", arch, "scnn-mst, spikeformer-mst, scnn-only or mst-only")
        ->check(CLI::IsMember({"scnn-mst", "spikeformer-mst", "scnn-only", "mst-only"}));
    app->add_option("--neuron", neuron, "if, lif or liaf")->check(CLI::IsMember({"if", "lif", "liaf"}));
    app->add_option_function<std::uint64_t>("--seed", [this](std::uint64_t s) { seed = s, seed_set = true; },
                                            "initialisation and shuffling seed");
    app->add_option("--clips", clips, "memory clips K (frames / K per clip)");
    app->add_option("--segments", segments, "event time bins T");
    app->add_option("--bottleneck-dim", bottleneck_dim, "MBF bottleneck channels");
    app->add_option("--num-classes", num_classes, "classifier outputs");
    app->add_flag("--no-mbf", no_mbf, "concatenate the modalities directly, without bottleneck fusion");
  }

  /// preset -> config file -> individual flags.
  void apply(ModelConfig& c) const {
    if (!preset.empty()) c = ModelConfig::from_preset(preset);
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      std::stringstream ss;
      ss << in.rdbuf();
      apply_config_text(c, ss.str());
    }
    if (!arch.empty()) c.arch = parse_arch(arch);
    if (!neuron.empty()) set_config_value(c, "neuron.kind", neuron);
    if (seed_set) c.seed = seed;
    if (clips) c.mst.clips = clips;
    if (segments) c.scnn.steps = segments;
    if (bottleneck_dim) c.mbf.bottleneck_dim = bottleneck_dim;
    if (num_classes) c.num_classes = num_classes;
    if (no_mbf) c.use_mbf = false;
    c.sync();
    c.validate();
  }
};

/// Per-layer table, then key=value totals. `extra_key` names an additional rate line when non-empty.
inline void write_energy_report(std::ostream& out, const energy::EnergyReport& r, const std::string& extra_key = "",
                                double extra_rate = 0) {
  using energy::LayerKind;
  out << std::left << std::setw(10) << "layer" << std::setw(8) << "kind" << std::right << std::setw(4) << "k"
      << std::setw(7) << "c_in" << std::setw(7) << "c_out" << std::setw(6) << "h" << std::setw(6) << "w"
      << std::setw(9) << "spiking" << std::setw(16) << "ops/step" << "\n";
  std::uint64_t deconv = 0;
  for (const auto& l : r.layers) {
    const auto& s = l.spec;
    if (s.kind == LayerKind::Deconv) deconv += l.op_ann;
    out << std::left << std::setw(10) << s.name << std::setw(8) << (s.kind == LayerKind::Conv ? "conv" : "deconv")
        << std::right << std::setw(4) << s.k_w << std::setw(7) << s.c_in << std::setw(7) << s.c_out << std::setw(6)
        << s.h_out << std::setw(6) << s.w_out << std::setw(9) << (s.spiking ? "yes" : "no") << std::setw(16)
        << l.op_ann << "\n";
  }
  out << std::setprecision(10);
  out << "spiking_ops=" << r.spiking_ops << "\n";
  out << "deconv_ops=" << deconv << "\n";
  out << "steps=" << r.steps << "\n";
  out << "spike_rate=" << r.spike_rate << "\n";
  out << "spike_rate_percent=" << r.spike_rate * 100 << "\n";
  if (!extra_key.empty()) out << extra_key << "=" << extra_rate * 100 << "\n";
  out << "ecp_ann_pj=" << r.ecp_ann << "\n";
  out << "ecp_snn_pj=" << r.ecp_snn << "\n";
  out << "improvement_ratio=" << r.improvement_ratio << "\n";
}

inline void print_samples_scores(std::ostream& out, const std::vector<std::string>& names,
                                 const std::vector<double>& scores) {
  out << std::setprecision(6);
  std::size_t best = 0;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    out << "class=" << c << (c < names.size() ? " name=" + names[c] : "") << " score=" << scores[c] << "\n";
    if (scores[c] > scores[best]) best = c;
  }
  out << "predicted=" << best << (best < names.size() ? " name=" + names[best] : "") << "\n";
}

/// Loads the model stored in a checkpoint; CLI flags override its config.
inline std::unique_ptr<Model<float>> model_from_checkpoint(const std::string& path, const ModelFlags& flags,
                                                           std::ostream& err, Checkpoint& ck) {
  ck = load_checkpoint(path);
  ModelConfig c;
  apply_config_text(c, ck.config_text);
  ModelFlags f = flags;
  f.preset.clear();  // the stored config already carries its preset
  f.apply(c);
  auto m = std::make_unique<Model<float>>(c);
  apply_checkpoint(ck, m->config(), m->params(), &err);
  return m;
}

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hybrid spiking/transformer RGB-event classifier"};
  app.require_subcommand(1);
  app.fallthrough(false);

  ModelFlags mf;
  std::string data, out_path = "model.ckp", log_path, dump_dir, checkpoint, sample_dir;
  std::size_t epochs = 0, steps = 0, batch = 0;
  double lr = 0;

  auto* train_cmd = app.add_subcommand("train", "train on a dataset directory and write a checkpoint");
  mf.attach(train_cmd);
  train_cmd->add_option("--data", data, "dataset root")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--out", out_path, "checkpoint path");
  train_cmd->add_option("--epochs", epochs, "epochs (0 with --steps: until the step cap)");
  train_cmd->add_option("--steps", steps, "optimizer step cap");
  train_cmd->add_option("--batch", batch, "batch size");
  train_cmd->add_option("--lr", lr, "Adam learning rate");
  train_cmd->add_option("--log", log_path, "append key=value log lines to this file");
  train_cmd->add_option("--dump-features", dump_dir, "write intermediate maps of the first sample as .npy");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset directory");
  mf.attach(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint, "CKP1 file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", data, "dataset root")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--dump-features", dump_dir, "write intermediate maps of every sample as .npy");

  auto* predict_cmd = app.add_subcommand("predict", "score one sample directory");
  mf.attach(predict_cmd);
  predict_cmd->add_option("--checkpoint", checkpoint, "CKP1 file")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--sample", sample_dir, "sample directory")->required()->check(CLI::ExistingDirectory);
  predict_cmd->add_option("--labels", data, "dataset root holding labels.txt");
  predict_cmd->add_option("--dump-features", dump_dir, "write intermediate maps as .npy");

  std::string energy_preset = "paper", spec_file;
  double rate = -1, e_mac = 4.6, e_ac = 0.9;
  std::uint64_t energy_steps = 0;
  auto* energy_cmd = app.add_subcommand("profile-energy", "operation counts and energy estimate");
  energy_cmd->add_option("--preset", energy_preset, "paper or tiny")->check(CLI::IsMember({"tiny", "paper"}));
  energy_cmd->add_option("--spec", spec_file, "layer list: kind k c_in c_out h_out w_out 0|1")
      ->check(CLI::ExistingFile);
  energy_cmd->add_option("--rate", rate, "spike rate (fraction); default: published rate or measured");
  energy_cmd->add_option("--steps", energy_steps, "time steps (default: preset)");
  energy_cmd->add_option("--checkpoint", checkpoint, "measure the rate with this model")->check(CLI::ExistingFile);
  energy_cmd->add_option("--data", data, "dataset used to measure the rate")->check(CLI::ExistingDirectory);
  energy_cmd->add_option("--e-mac", e_mac, "pJ per multiply-accumulate");
  energy_cmd->add_option("--e-ac", e_ac, "pJ per accumulate");

  std::string frames_dir, ts_file, csv_path;
  double threshold = 0.2;
  auto* sim_cmd = app.add_subcommand("simulate-events", "frames -> DVS events");
  sim_cmd->add_option("--frames", frames_dir, "directory of NNNN.ppm")->required()->check(CLI::ExistingDirectory);
  sim_cmd->add_option("--timestamps", ts_file, "one timestamp per frame (us)")->required()->check(CLI::ExistingFile);
  sim_cmd->add_option("--threshold", threshold, "log-intensity contrast threshold C");
  sim_cmd->add_option("--out", out_path, "EVT1 output")->required();
  sim_cmd->add_option("--csv", csv_path, "also write x,y,t,p text");

  SynthOptions so;
  std::string gen_out;
  auto* gen_cmd = app.add_subcommand("gen-data", "write a synthetic paired frame/event dataset");
  gen_cmd->add_option("--out", gen_out, "dataset root")->required();
  gen_cmd->add_option("--classes", so.classes, "number of classes (>= 2)");
  gen_cmd->add_option("--samples", so.samples_per_class, "samples per class");
  gen_cmd->add_option("--size", so.size, "sensor and frame extent");
  gen_cmd->add_option("--frames", so.frames, "frames per sample");
  gen_cmd->add_option("--threshold", so.dvs_threshold, "DVS contrast threshold");
  gen_cmd->add_option("--seed", so.seed, "generator seed");

  std::uint64_t gc_seed = 7;
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op and the tiny model");
  gc_cmd->add_option("--seed", gc_seed, "input seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return e.get_exit_code() ? e.get_exit_code() : 2;
  }

  try {
    if (*train_cmd) {
      ModelConfig c;
      mf.apply(c);
      if (epochs) c.train.epochs = epochs;
      if (steps) {
        c.train.max_steps = steps;
        if (!epochs) c.train.epochs = 0;
      }
      if (batch) c.train.batch = batch;
      if (lr > 0) c.train.lr = lr;
      c.validate();
      const auto samples = load_dataset<float>(data, c);
      Model<float> m(c);
      std::ostringstream log;
      log << "run arch=" << to_string(c.arch) << " preset=" << c.preset << " seed=" << c.seed
          << " samples=" << samples.size() << " params=" << m.params().numel() << "\n";
      const auto r = train(m, samples, &log);
      save_checkpoint(out_path, make_checkpoint(m.config(), m.params(), r.steps));
      out << log.str() << "checkpoint=" << out_path << "\n";
      if (!log_path.empty()) std::ofstream(log_path, std::ios::app) << log.str();
      if (!dump_dir.empty()) dump_features(m, samples[0], dump_dir);
      return 0;
    }
    if (*eval_cmd) {
      Checkpoint ck;
      auto m = model_from_checkpoint(checkpoint, mf, err, ck);
      const auto samples = load_dataset<float>(data, m->config());
      const auto r = evaluate(*m, samples);
      out << "eval step=" << ck.step << " loss=" << r.loss << " " << format_metrics(r.metrics) << "\n";
      const auto& mt = r.metrics;
      for (std::size_t cl = 0; cl < mt.per_class_total.size(); ++cl)
        out << "class=" << cl << " correct=" << mt.per_class_correct[cl] << " total=" << mt.per_class_total[cl] << "\n";
      if (!dump_dir.empty())
        for (std::size_t i = 0; i < samples.size(); ++i)
          dump_features(*m, samples[i], dump_dir, sample_dir_name(i) + ".");
      return 0;
    }
    if (*predict_cmd) {
      Checkpoint ck;
      auto m = model_from_checkpoint(checkpoint, mf, err, ck);
      const auto s = load_sample<float>(sample_dir, m->config());
      const auto r = run_sample(*m, s, false);
      print_samples_scores(out, data.empty() ? std::vector<std::string>{} : read_labels(data), r.scores);
      if (!dump_dir.empty()) dump_features(*m, s, dump_dir);
      return 0;
    }
    if (*energy_cmd) {
      const energy::EnergyConstants k{e_mac, e_ac};
      if (!spec_file.empty()) {
        std::ifstream in(spec_file);
        std::stringstream ss;
        ss << in.rdbuf();
        const auto layers = energy::parse_layer_specs(ss.str());
        write_energy_report(out, energy::estimate(layers, energy_steps ? energy_steps : 1, rate < 0 ? 0 : rate, k));
        return 0;
      }
      if (energy_preset == "paper" && checkpoint.empty()) {
        const auto r = energy::paper_preset_report(rate < 0 ? energy::ReferenceFigures::kSpikeRate : rate, k);
        write_energy_report(out, r.energy, "reproduced_spike_rate_percent", r.reproduced_spike_rate);
        out << "total_spikes=" << energy::ReferenceFigures::kTotalSpikes << "\n";
        return 0;
      }
      ModelConfig c = ModelConfig::from_preset(energy_preset);
      double measured = -1;
      if (!checkpoint.empty()) {
        if (data.empty()) throw std::invalid_argument("profile-energy: --checkpoint needs --data to measure the rate");
        Checkpoint ck;
        auto m = model_from_checkpoint(checkpoint, mf, err, ck);
        c = m->config();
        if (c.arch != Arch::ScnnMst && c.arch != Arch::ScnnOnly)
          throw std::invalid_argument("profile-energy: rate measurement needs an SCNN model");
        const auto ev = evaluate(*m, load_dataset<float>(data, c));
        const auto sr = energy::measure_spike_rate(c.scnn, ev.layer_spikes);
        measured = sr.per_op;
        out << "measured_spike_rate_plain=" << sr.plain << "\nmean_spikes_per_sample=" << sr.mean_spikes << "\n";
      }
      const double use = rate >= 0 ? rate : measured >= 0 ? measured : energy::ReferenceFigures::kSpikeRate;
      write_energy_report(out, energy::estimate(energy::scnn_layers(c.scnn), energy_steps ? energy_steps : c.scnn.steps, use, k),
                          measured >= 0 ? "measured_spike_rate_percent" : "", measured);
      return 0;
    }
    if (*sim_cmd) {
      const auto seq = load_frame_sequence(frames_dir, ts_file);
      const auto ev = simulate_dvs(seq, threshold);
      save_evt1(out_path, ev);
      if (!csv_path.empty()) std::ofstream(csv_path) << evt_csv::encode(ev);
      out << "events=" << ev.size() << " width=" << ev.width << " height=" << ev.height << "\n";
      return 0;
    }
    if (*gen_cmd) {
      const auto counts = generate_dataset(gen_out, so);
      std::size_t total = 0;
      for (auto n : counts) total += n;
      out << "samples=" << counts.size() << " classes=" << so.classes << " events=" << total << " root=" << gen_out
          << "\n";
      return 0;
    }
    if (*gc_cmd) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto reports = run_gradcheck_suite(&out, gc_seed);
      std::size_t failed = 0;
      for (const auto& r : reports) failed += !r.passed();
      out << "gradcheck checks=" << reports.size() << " failed=" << failed << " seconds="
          << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << "\n";
      return failed ? 1 : 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace hsnn::cli
