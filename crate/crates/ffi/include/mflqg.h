#ifndef MFLQG_H
#define MFLQG_H

/* Generated by cbindgen from the mflqg-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status of one API call.
typedef enum MflqgStatus {
  MFLQG_STATUS_OK = 0,
  MFLQG_STATUS_VALIDATION_FAILED = 1,
  MFLQG_STATUS_SOLVER_BREAKDOWN = 2,
  MFLQG_STATUS_IO_ERROR = 3,
  MFLQG_STATUS_INVALID_ARGUMENT = 4,
  MFLQG_STATUS_PANIC = 5,
} MflqgStatus;

// Opaque scenario handle.
typedef struct MflqgScenario MflqgScenario;

// Opaque solved-system handle.
typedef struct MflqgSolution MflqgSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Most recent error message on this thread, or null. The pointer is owned
// by the library and stays valid until the next failing call.
const char *mflqg_last_error(void);

// Release a string returned by this library.
//
// # Safety
// `s` must be a pointer previously handed out by an `mflqg_*` call and not
// yet freed.
void mflqg_string_free(char *s);

// Load a scenario file.
//
// # Safety
// `path` must be a valid NUL-terminated string; `out` must be non-null.
enum MflqgStatus mflqg_scenario_load(const char *path, struct MflqgScenario **out);

// Parse scenario text directly (relative csv references resolve against the
// working directory).
//
// # Safety
// `text` must be a valid NUL-terminated string; `out` must be non-null.
enum MflqgStatus mflqg_scenario_from_text(const char *text, struct MflqgScenario **out);

// # Safety
// `scenario` must come from a load call and not be freed twice.
void mflqg_scenario_free(struct MflqgScenario *scenario);

// State dimension of the scenario.
//
// # Safety
// `scenario` must be a live handle.
uintptr_t mflqg_scenario_state_dim(const struct MflqgScenario *scenario);

// Control dimension of the scenario.
//
// # Safety
// `scenario` must be a live handle.
uintptr_t mflqg_scenario_control_dim(const struct MflqgScenario *scenario);

// Default grid steps requested by the scenario file.
//
// # Safety
// `scenario` must be a live handle.
uintptr_t mflqg_scenario_default_steps(const struct MflqgScenario *scenario);

// Baseline-hypothesis validation; hands out the JSON report.
//
// # Safety
// `scenario` must be a live handle; `report_json` non-null.
enum MflqgStatus mflqg_validate(const struct MflqgScenario *scenario, char **report_json);

// Solve the consistency system (`use_picard` != 0 selects the fixed-point
// method) and return an opaque solution handle.
//
// # Safety
// `scenario` must be a live handle; `out` non-null. `steps` = 0 uses the
// scenario default.
enum MflqgStatus mflqg_solve(const struct MflqgScenario *scenario,
                             uintptr_t steps,
                             int32_t use_picard,
                             struct MflqgSolution **out);

// # Safety
// `solution` must come from `mflqg_solve` and not be freed twice.
void mflqg_solution_free(struct MflqgSolution *solution);

// Number of grid steps of a solved system.
//
// # Safety
// `solution` must be a live handle.
uintptr_t mflqg_solution_steps(const struct MflqgSolution *solution);

// Worst residual of the discretized system rows, and the normalizer
// 1 + sup-norm of the representations.
//
// # Safety
// All pointers must be valid; `solution` a live handle.
enum MflqgStatus mflqg_solution_residual(const struct MflqgSolution *solution,
                                         double *max_rms,
                                         double *normalizer);

// Persist a solved system as the labeled-CSV solution file.
//
// # Safety
// `solution` a live handle; `path` a valid NUL-terminated string.
enum MflqgStatus mflqg_solution_save(const struct MflqgSolution *solution, const char *path);

// Decentralized strategy u_i at grid step `step` for agent state `x_i` and
// common-noise pair (`xhat`, `h`); writes r values into `u_out`.
//
// # Safety
// `x_i`, `xhat`, `h` must point to n doubles each and `u_out` to r doubles.
enum MflqgStatus mflqg_strategy_eval(const struct MflqgSolution *solution,
                                     uintptr_t step,
                                     const double *x_i,
                                     const double *xhat,
                                     const double *h,
                                     double *u_out);

// Worst-case volatility sigma0_hat at grid step `step`; writes n values.
//
// # Safety
// `xhat`, `h` must point to n doubles each and `sigma0_out` to n doubles.
enum MflqgStatus mflqg_adversary_eval(const struct MflqgSolution *solution,
                                      uintptr_t step,
                                      const double *xhat,
                                      const double *h,
                                      double *sigma0_out);

// Convergence study over the given population sizes; hands out the summary
// as JSON.
//
// # Safety
// `solution` a live handle; `n_list` points to `n_count` entries;
// `summary_json` non-null.
enum MflqgStatus mflqg_study(const struct MflqgSolution *solution,
                             const uintptr_t *n_list,
                             uintptr_t n_count,
                             uintptr_t paths,
                             uint64_t seed,
                             char **summary_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MFLQG_H */
