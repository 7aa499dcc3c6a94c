#ifndef PAYLOAD_TRANSPORT_H
#define PAYLOAD_TRANSPORT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Dynamic model driven by the controller.
typedef enum PtModel {
  PT_MODEL_SIMPLIFIED = 0,
  PT_MODEL_FULL = 1,
} PtModel;

// Result of an API call.
typedef enum PtStatus {
  PT_STATUS_OK = 0,
  PT_STATUS_NULL_POINTER = 1,
  PT_STATUS_INVALID_ARGUMENT = 2,
  PT_STATUS_PARSE = 3,
  PT_STATUS_IO = 4,
  // The simulation hit a numerical failure and cannot continue.
  PT_STATUS_NUMERICAL = 5,
  // The simulation already reached its final time.
  PT_STATUS_FINISHED = 6,
  PT_STATUS_PANIC = 7,
} PtStatus;

// Opaque scenario handle.
typedef struct PtScenario PtScenario;

// Opaque simulation handle. Keeps the log of every step taken.
typedef struct PtSimulation PtSimulation;

// Logged quantities of one step, evaluated before the step is taken.
typedef struct PtStepRecord {
  double t;
  double position[3];
  double position_error[3];
  double psi0;
  // Largest link direction error.
  double link_psi_max;
  // Largest quadrotor attitude error; zero for the simplified model.
  double quad_psi_max;
  double lyapunov;
  double realization_gap;
  double estimate_norms[3];
} PtStepRecord;

typedef struct PtPayloadState {
  double position[3];
  double velocity[3];
  // Row-major rotation matrix.
  double attitude[9];
  double body_rate[3];
} PtPayloadState;

typedef struct PtQuadState {
  double link[3];
  double link_rate[3];
  // Row-major rotation matrix.
  double attitude[9];
  double body_rate[3];
} PtQuadState;

// Summary of the steps taken so far.
typedef struct PtMetrics {
  size_t steps;
  double t_last;
  double position_error_final;
  // Means over the last 2 s of logged steps.
  double position_error_mean;
  double psi0_mean;
  double link_psi_max_mean;
  double estimate_norm_max;
  double lyapunov_initial;
  double lyapunov_final;
  double orthogonality_max;
  double unit_norm_max;
  double tangency_max;
} PtMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Returns the message of the last failed call on this thread, or null.
// The string stays valid until the next failing call on the same thread.
const char *pt_last_error(void);

// Library version as a static NUL-terminated string.
const char *pt_version(void);

// Creates a scenario from a bundled preset such as `"figure8"`.
enum PtStatus pt_scenario_preset(const char *name, struct PtScenario **out);

// Reads a scenario from a TOML file.
enum PtStatus pt_scenario_load(const char *path, struct PtScenario **out);

// Parses a scenario from TOML text.
enum PtStatus pt_scenario_parse(const char *text, struct PtScenario **out);

// Releases a scenario. Null is ignored.
void pt_scenario_free(struct PtScenario *scenario);

// Number of quadrotors, or 0 for a null handle.
size_t pt_scenario_quad_count(const struct PtScenario *scenario);

enum PtStatus pt_scenario_set_dt(struct PtScenario *scenario, double dt);

enum PtStatus pt_scenario_set_t_final(struct PtScenario *scenario, double t_final);

enum PtStatus pt_scenario_set_model(struct PtScenario *scenario, enum PtModel model);

enum PtStatus pt_scenario_set_adaptation(struct PtScenario *scenario, bool enabled);

enum PtStatus pt_scenario_set_control(struct PtScenario *scenario, bool enabled);

enum PtStatus pt_scenario_set_decimation(struct PtScenario *scenario, size_t decimation);

// Starts a simulation from a copy of `scenario`; the scenario handle stays
// owned by the caller.
enum PtStatus pt_simulation_new(const struct PtScenario *scenario, struct PtSimulation **out);

// Releases a simulation. Null is ignored.
void pt_simulation_free(struct PtSimulation *simulation);

// Takes one integration step. `record` may be null; otherwise it receives
// the quantities logged for the step.
enum PtStatus pt_simulation_step(struct PtSimulation *simulation, struct PtStepRecord *record);

// Steps until the final time or the first failure.
enum PtStatus pt_simulation_run(struct PtSimulation *simulation);

double pt_simulation_time(const struct PtSimulation *simulation);

size_t pt_simulation_step_index(const struct PtSimulation *simulation);

bool pt_simulation_finished(const struct PtSimulation *simulation);

enum PtStatus pt_simulation_payload(const struct PtSimulation *simulation,
                                    struct PtPayloadState *out);

enum PtStatus pt_simulation_quad(const struct PtSimulation *simulation,
                                 size_t index,
                                 struct PtQuadState *out);

// Summarizes the logged steps. Fails if no step has been taken.
enum PtStatus pt_simulation_metrics(const struct PtSimulation *simulation, struct PtMetrics *out);

// Writes `timeseries.csv`, `metrics.txt` and `plotdata/` for the steps
// logged so far into `dir`.
enum PtStatus pt_simulation_write_outputs(const struct PtSimulation *simulation, const char *dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PAYLOAD_TRANSPORT_H */
