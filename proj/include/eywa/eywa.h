#ifndef EYWA_EYWA_H
#define EYWA_EYWA_H

/* C interface to the EYWA overlay simulator.
 *
 * Handles are opaque and owned by the caller; release them with the matching
 * *_free function. Every fallible call returns an eywa_status. On failure the
 * calling thread's last error message is available from eywa_last_error().
 * Strings handed out through `char**` parameters are heap copies that must be
 * released with eywa_string_free. Borrowed `const char*` results stay valid
 * until the owning handle is freed.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(EYWA_BUILDING_LIBRARY)
#    define EYWA_API __declspec(dllexport)
#  else
#    define EYWA_API __declspec(dllimport)
#  endif
#else
#  define EYWA_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum eywa_status {
    EYWA_OK = 0,
    EYWA_ERR_INVALID_ARGUMENT = 1, /* null handle, unknown name, bad enum */
    EYWA_ERR_VALIDATION = 2,       /* scenario document or topology rejected */
    EYWA_ERR_CAPACITY = 3,         /* an identifier space or table is exhausted */
    EYWA_ERR_PROTOCOL = 4,         /* a malformed frame or protocol violation */
    EYWA_ERR_IO = 5,               /* file could not be read or written */
    EYWA_ERR_INTERNAL = 6
} eywa_status;

typedef enum eywa_mode {
    EYWA_MODE_EYWA = 0,
    EYWA_MODE_MVRRP = 1,
    EYWA_MODE_SINGLE_VR = 2
} eywa_mode;

typedef struct eywa_scenario eywa_scenario;
typedef struct eywa_result eywa_result;

EYWA_API const char* eywa_version(void);
EYWA_API const char* eywa_status_string(eywa_status status);
/* Message of the last failed call on this thread, or "" if none. */
EYWA_API const char* eywa_last_error(void);
EYWA_API void eywa_string_free(char* s);

EYWA_API eywa_status eywa_mode_parse(const char* text, eywa_mode* out);

/* Builtin scenario catalogue. */
EYWA_API size_t eywa_builtin_count(void);
EYWA_API const char* eywa_builtin_name(size_t index);
EYWA_API const char* eywa_builtin_description(size_t index);
EYWA_API int eywa_is_builtin(const char* name);

/* Scenario documents. */
EYWA_API eywa_status eywa_scenario_load_file(const char* path, eywa_scenario** out);
EYWA_API eywa_status eywa_scenario_parse(const char* json_text, eywa_scenario** out);
/* `mode` may be null to keep the builtin's own default. */
EYWA_API eywa_status eywa_scenario_load_builtin(const char* name, const eywa_mode* mode, eywa_scenario** out);
EYWA_API eywa_status eywa_scenario_validate(const eywa_scenario* scenario);
EYWA_API eywa_status eywa_scenario_set_mode(eywa_scenario* scenario, eywa_mode mode);
EYWA_API const char* eywa_scenario_name(const eywa_scenario* scenario);
EYWA_API void eywa_scenario_free(eywa_scenario* scenario);

/* Runs a scenario. With has_seed == 0 the seed comes from the document,
 * then EYWA_SIM_SEED, then 1. Assertion failures are not errors; query
 * eywa_result_passed. */
EYWA_API eywa_status eywa_run(const eywa_scenario* scenario, int has_seed, uint64_t seed, eywa_result** out);

EYWA_API int eywa_result_passed(const eywa_result* result);
EYWA_API uint64_t eywa_result_seed(const eywa_result* result);
EYWA_API size_t eywa_result_assertion_count(const eywa_result* result);
/* expected and measured are NaN when the assertion has no such value. */
EYWA_API eywa_status eywa_result_assertion(const eywa_result* result, size_t index, const char** name,
                                           double* expected, double* measured, double* tolerance, int* pass);
/* Returns 0 and sets *value when the counter exists. */
EYWA_API int eywa_result_counter(const eywa_result* result, const char* key, uint64_t* value);
EYWA_API const char* eywa_result_report_json(const eywa_result* result);
EYWA_API const char* eywa_result_throughput_csv(const eywa_result* result);
EYWA_API const char* eywa_result_arp_events_csv(const eywa_result* result);
/* Writes throughput.csv, arp_events.csv and report.json into dir. */
EYWA_API eywa_status eywa_result_write(const eywa_result* result, const char* dir);
EYWA_API void eywa_result_free(eywa_result* result);

/* Rule-matrix conformance. *table receives the printable report;
 * *mismatches the number of mismatching cells plus never-produced rule IDs
 * plus runtime not-applicable decisions. */
EYWA_API eywa_status eywa_rules_check(char** table, size_t* mismatches);

#ifdef __cplusplus
}
#endif

#endif
