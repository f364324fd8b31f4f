#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cgm/flows.hpp"

namespace cgm {

// Training hyperparameters from the config file; unset fields fall back to
// the per-kind defaults when a model kind is chosen.
struct TrainOverrides {
  std::optional<int> epochs, batch_size, hidden_dim, constraint_samples, ode_train_steps;
  std::optional<double> learning_rate, moser_lambda, moser_floor;
};

struct PipelineConfig {
  std::vector<std::string> mesh_paths;       // mesh ids are 1-based list positions
  std::vector<std::string> intensity_paths;  // per mesh; "uniform" or empty = by area
  int reference_mesh = 1;                    // alignment target, 1-based
  int bandwidth = 16;
  int train_samples = 5000;
  int validation_samples = 5000;
  std::string output_dir = "out";
  std::uint64_t seed = 0;
  bool constraint_on_mesh = false;  // draw Moser constraint points on the reference mesh
  TrainOverrides train;
};

// Parses a key = value config file ('#' comments, repeated `mesh`/`intensity`
// keys in order). Relative mesh and intensity paths resolve against the
// config file's directory.
PipelineConfig load_pipeline_config(const std::string& path);

// Per-kind training defaults with the config file's overrides applied and the
// training seed derived from the pipeline seed.
TrainConfig resolve_train_config(const PipelineConfig& config, FlowKind kind);

// FNV-1a 64 over the file bytes, 16 hex digits. Artifacts record the hashes
// of their inputs; consumers recompute and refuse stale chains.
std::string file_hash_hex(const std::string& path);

// Output file layout under one directory.
struct Artifacts {
  std::string dir;
  explicit Artifacts(std::string d) : dir(std::move(d)) {}
  std::string param(int mesh_id) const;
  std::string rotation(int mesh_id) const;
  std::string dataset(const std::string& split, int mesh_id) const;
  std::string pooled(const std::string& split) const;
  std::string manifest() const;
  std::string checkpoint(FlowKind kind) const;
  std::string train_log(FlowKind kind) const;
  std::string samples_csv(FlowKind kind, int mesh_id) const;
  std::string samples_ply(FlowKind kind, int mesh_id) const;
  std::string density_ply(FlowKind kind, int mesh_id) const;
  std::string eval_report(FlowKind kind) const;
  std::string seed_study(FlowKind kind) const;
  std::string holdout_csv(FlowKind kind) const;
};

// Model checkpoint: architecture descriptor, flat parameters in declared
// order, kind, noise descriptor, and the training configuration used.
void save_checkpoint(const std::string& path, const FlowModel& model, const TrainConfig& config,
                     const std::map<std::string, std::string>& input_hashes,
                     const std::string& constraint_domain);
FlowModel load_checkpoint(const std::string& path, TrainConfig* config = nullptr);

// Training log as CSV: epoch, train LL, validation LL, wall seconds.
void save_training_log(const std::string& path, const std::vector<EpochLog>& log);
std::vector<EpochLog> load_training_log(const std::string& path);

// Piecewise-linear viridis colormap on [0, 1] (clamped), dark purple to yellow.
std::array<std::uint8_t, 3> viridis_color(double t);

// Pipeline stages. Each throws InputError for missing/inconsistent inputs and
// Error for internal failures; progress goes to `log`.
void cmd_parameterize(const PipelineConfig& config, std::ostream& log);
void cmd_align(const PipelineConfig& config, std::ostream& log);
void cmd_make_dataset(const PipelineConfig& config, std::ostream& log);
void cmd_train(const PipelineConfig& config, FlowKind kind, std::ostream& log);
void cmd_sample(const PipelineConfig& config, FlowKind kind, int mesh_id, int n,
                std::ostream& log);
void cmd_eval(const PipelineConfig& config, FlowKind kind, std::ostream& log);
void cmd_export_density(const PipelineConfig& config, FlowKind kind, int mesh_id,
                        std::ostream& log);

// Retrains with n_seeds derived seeds on the pooled dataset, evaluates each on
// the pooled validation split, and reports mean +- one standard deviation.
struct SeedStudyResult {
  std::vector<double> per_seed;
  double mean = 0.0;
  double stddev = 0.0;
  std::string table;  // "mean +- std"
};
SeedStudyResult run_seed_study(const PipelineConfig& config, FlowKind kind, int n_seeds,
                               std::ostream& log);

// Held-out generalization harness: hold out one mesh, train on the first
// k = 1..n-1 of the remaining meshes (n_seeds runs each), evaluate on the
// held-out mesh's validation split, and write one CSV row per run.
struct HoldoutRow {
  int k = 0;
  int seed_index = 0;
  double held_out_ll = 0.0;
};
std::vector<HoldoutRow> run_holdout_study(const PipelineConfig& config, FlowKind kind,
                                          int held_out_mesh, int n_seeds, std::ostream& log);

}  // namespace cgm
