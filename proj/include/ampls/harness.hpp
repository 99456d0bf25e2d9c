// Experiment runner: paired scene batches, metrics (Wilson intervals,
// planning time, normalised path length), ablation switches, the closed-loop
// conveyor simulation, and hyperparameter grid search.
#pragma once

#include "ampls/baseline.hpp"
#include "ampls/planner.hpp"

#include <nlohmann/json.hpp>

namespace ampls {

// Closed-form Wilson score interval. z = 1.959964 at 95%.
std::pair<double, double> wilson_interval(long successes, long n, double confidence = 0.95);

// Sum of consecutive end-effector displacements divided by the straight-line
// start-to-target distance. Throws DegenerateTarget below 1e-6 m.
double normalized_path_length(const std::vector<JointConfig>& waypoints, const ArmModel& arm,
                              const Vec3& target_pos);

// Rank-based (Mann-Whitney) ROC-AUC with average ranks for ties.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Table-1 row set.
inline const std::vector<std::string> kAllMethods = {
    "amp-ls", "amp-ls-no-col-loss", "amp-ls-no-prior-loss", "amp-ls-no-explicit",
    "rrt-connect"};

// Maps ablation flags onto the single parameterised planner code path.
PlannerConfig run_ablation_switches(PlannerConfig cfg, bool no_col_loss, bool no_prior_loss,
                                    bool no_explicit_check);
PlannerConfig planner_config_for_method(const PlannerConfig& base, const std::string& method);

struct BenchConfig {
  int n_scenes = 100;
  std::uint64_t seed = 0;
  std::vector<std::string> methods = kAllMethods;
  SceneGenParams scene;
  CameraParams camera;
  int cloud_points = 2048;
  bool occlusion = true;
  PlannerConfig planner;
  RrtConfig rrt;
  IkOptions ik{1e-2, 0.2, 200, 50, 0.003, 5.0 * M_PI / 180.0};
  double success_pos_tol = 0.01;
  double success_ori_tol_deg = 15.0;
  double audit_spacing = 0.05;  // radians, post-hoc oracle audit
  int workers = 2;
};

struct TrialResult {
  std::string method;
  int trial = 0;
  bool reached = false;           // final waypoint FK within tolerances
  int oracle_collisions = 0;      // post-hoc audit violations along the path
  bool success = false;           // reached && zero audit violations
  double planning_seconds = 0.0;
  double norm_path_length = 0.0;
  int waypoint_count = 0;
  long iterations = 0;
  std::string failure_reason;
  bool straight_line_ok = false;  // scene-difficulty diagnostic (per fixture)
};

struct MethodAggregate {
  std::string method;
  long n = 0, successes = 0;
  double success_rate = 0, wilson_lo = 0, wilson_hi = 0;
  double time_mean = 0, time_sd = 0, time_median = 0;
  double path_mean = 0, path_sd = 0;  // over successful trials
};

struct BenchReport {
  std::vector<MethodAggregate> methods;
  nlohmann::json provenance;
};

struct BenchOutput {
  std::vector<TrialResult> trials;
  BenchReport report;
};

// Paired design: every method sees the identical per-trial fixture
// (scene, start, target, point cloud), all derived from (seed, trial).
BenchOutput run_benchmark(const BenchConfig& cfg, const ArmModel& arm,
                          const VaeModel<float>& vae, const CollisionPredictor<float>& pred);

MethodAggregate aggregate_trials(const std::string& method,
                                 const std::vector<TrialResult>& trials);
nlohmann::json report_to_json(const BenchReport& report);

// trials.csv carries only seed-deterministic columns; timings go to a
// separate CSV so repeated runs are byte-identical.
void write_trials_csv(const std::string& path, const std::vector<TrialResult>& trials);
void write_timings_csv(const std::string& path, const std::vector<TrialResult>& trials);
std::vector<TrialResult> read_trials_csv(const std::string& path);

void write_plan_jsonl(const std::string& path, const PlanResult& plan);
void write_diagnostics_csv(const std::string& path, const PlanResult& plan);

// ---------------------------------------------------------------------------
// Closed-loop conveyor simulation
// ---------------------------------------------------------------------------

struct ConveyorConfig {
  int trials = 30;
  std::uint64_t seed = 0;
  double belt_speed = 0.03;        // m/s, belt moves along -y
  double belt_x = 0.45;            // belt line in front of the arm
  double belt_y_start = 0.55, belt_y_end = -0.5;
  double obstacle_gap = 0.22;      // target trails the obstacle by this much
  double hover_height = 0.12;      // target pose height above the object top
  ClosedLoopConfig loop;
  SceneGenParams scene;            // size ranges for the belt obstacle
  CameraParams camera;
  int cloud_points = 2048;
  bool occlusion = true;
  double audit_spacing = 0.05;
};

struct ConveyorTrial {
  int trial = 0;
  bool reached = false;
  int oracle_collisions = 0;
  bool success = false;   // reached with a collision-free executed stream
  int ticks = 0;
  int overruns = 0;
  int reach_tick = -1;
  std::string failure_reason;
};

std::vector<ConveyorTrial> run_conveyor_sim(const ConveyorConfig& cfg, const ArmModel& arm,
                                            const VaeModel<float>& vae,
                                            const CollisionPredictor<float>& pred);

// ---------------------------------------------------------------------------
// Grid search (lexicographic objective: success rate, then mean time)
// ---------------------------------------------------------------------------

struct GridSearchResult {
  nlohmann::json table;       // one row per grid point
  nlohmann::json best_point;
  PlannerConfig best_config;
};

// grid: JSON object mapping parameter name -> array of values. Supported
// keys: alpha_am, geco_eta, geco_beta, kappa_pos, kappa_ori, kappa_col,
// lambda0_pos, lambda0_ori, lambda0_col, gamma_col.
GridSearchResult grid_search(const nlohmann::json& grid, const BenchConfig& base,
                             const ArmModel& arm, const VaeModel<float>& vae,
                             const CollisionPredictor<float>& pred);

PlannerConfig apply_grid_point(PlannerConfig cfg, const nlohmann::json& point);

}  // namespace ampls
