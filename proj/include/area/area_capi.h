#ifndef AREA_CAPI_H
#define AREA_CAPI_H

/* C interface to the adversarial-retrieval lab. The lab is an opaque
 * handle bound to a config and an output directory; stages read and write
 * their artifacts there, so they can run in separate processes.
 *
 * Every function returns AREA_OK on success; on failure a human-readable
 * message is available from area_last_error() until the next call on the
 * same thread. */

#include <stddef.h>

#if defined(_WIN32)
#define AREA_API __declspec(dllexport)
#else
#define AREA_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef struct area_lab area_lab;

typedef enum area_status {
    AREA_OK = 0,
    AREA_ERR_INVALID_ARGUMENT = 1,
    AREA_ERR_IO = 2,
    AREA_ERR_STATE = 3,
    AREA_ERR_DIVERGED = 4,
    AREA_ERR_INTERNAL = 5
} area_status;

AREA_API const char* area_version(void);
AREA_API const char* area_status_name(area_status status);
AREA_API const char* area_last_error(void);

/* Open a lab from a key=value config file (config_path) or from config
 * text passed directly. out_dir is created if missing. */
AREA_API area_status area_lab_open(const char* config_path, const char* out_dir, area_lab** out);
AREA_API area_status area_lab_open_text(const char* config_text, const char* out_dir,
                                        area_lab** out);
AREA_API void area_lab_close(area_lab* lab);

/* Override one config key (same keys as the config file). */
AREA_API area_status area_lab_set(area_lab* lab, const char* key, const char* value);

/* Pipeline stages. method/stratum/rank_check may be NULL in
 * area_lab_attack to run everything the config lists. */
AREA_API area_status area_lab_gen_data(area_lab* lab);
AREA_API area_status area_lab_train_pipeline(area_lab* lab);
AREA_API area_status area_lab_train_surrogate(area_lab* lab);
AREA_API area_status area_lab_attack(area_lab* lab, const char* method, const char* stratum,
                                     const char* rank_check);
AREA_API area_status area_lab_report(area_lab* lab);

/* Rendered report table from the last area_lab_report call; owned by the
 * lab, valid until the next report or close. */
AREA_API const char* area_lab_report_text(const area_lab* lab);

/* All stages end to end. */
AREA_API area_status area_run_experiment(const char* config_path, const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif
