#ifndef CORRIDRONE_H
#define CORRIDRONE_H

/* C interface to the corridor planner, simulator, mock UTM and mission
 * service. All inputs and outputs are JSON text. Strings returned through
 * `char**` are owned by the caller and released with cd_string_free. On
 * failure the calls return a non-zero status and cd_last_error() describes
 * the error of the calling thread. */

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define CD_API __attribute__((visibility("default")))
#else
#define CD_API
#endif

typedef enum {
  CD_OK = 0,
  CD_INFEASIBLE = 1,
  CD_VALIDATION = 2,
  CD_TRANSPORT = 3,
  CD_NOT_FOUND = 4,
  CD_CONFLICT = 5,
  CD_IO = 6,
  CD_INTERNAL = 7
} cd_status;

typedef struct cd_service cd_service;
typedef struct cd_utm_server cd_utm_server;

CD_API const char* cd_version(void);

/* "Code: message" of the last failure on this thread, "" if none. */
CD_API const char* cd_last_error(void);
/* {"error", "message", "details"} of the last failure on this thread. */
CD_API const char* cd_last_error_json(void);
CD_API void cd_string_free(char* s);

/* Ranked corridor options for a plan file {request, environment?, zones?}
 * (a bare request is accepted too). `config_json` may be NULL. */
CD_API cd_status cd_plan(const char* plan_json, const char* config_json, char** options_json);

/* Runs a scenario headless and writes events.jsonl, telemetry.csv and
 * metrics.json into `out_dir`. `metrics_json` may be NULL. */
CD_API cd_status cd_simulate(const char* scenario_json, const char* out_dir, char** metrics_json);

/* Rebuilds a mission record from its journal file. */
CD_API cd_status cd_replay_journal(const char* journal_path, char** record_json);

/* Mission service. `utm_endpoint` is "host:port" of a UTM server, or NULL
 * for an embedded in-process one. Config keys: see docs/formats.md. */
CD_API cd_status cd_service_create(const char* config_json, const char* utm_endpoint,
                                   cd_service** out);
/* One API request, e.g. ("POST", "/missions", "{...}"). */
CD_API cd_status cd_service_call(cd_service* svc, const char* method, const char* target,
                                 const char* body, int* http_status, char** response_json);
/* Serves the API over HTTP; port 0 picks one, reported in `bound_port`. */
CD_API cd_status cd_service_start_http(cd_service* svc, const char* host, int port,
                                       int* bound_port);
/* Steps active missions continuously at `real_time_factor` x wall clock. */
CD_API cd_status cd_service_auto_run(cd_service* svc, double real_time_factor);
/* Blocks until the HTTP server stops. */
CD_API void cd_service_wait(cd_service* svc);
CD_API void cd_service_stop(cd_service* svc);
CD_API void cd_service_destroy(cd_service* svc);

/* Mock UTM authority on TCP. The registry file is loaded if present and
 * rewritten after every change. `cost_json` may be NULL. */
CD_API cd_status cd_utm_server_create(const char* registry_path, const char* host, int port,
                                      const char* cost_json, cd_utm_server** out);
CD_API int cd_utm_server_port(const cd_utm_server* srv);
CD_API void cd_utm_server_wait(cd_utm_server* srv);
CD_API void cd_utm_server_stop(cd_utm_server* srv);
CD_API void cd_utm_server_destroy(cd_utm_server* srv);

#ifdef __cplusplus
}
#endif

#endif
