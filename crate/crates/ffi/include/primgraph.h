#ifndef PRIMGRAPH_H
#define PRIMGRAPH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PgStatus {
  PG_STATUS_OK = 0,
  PG_STATUS_NULL_POINTER = 1,
  PG_STATUS_INVALID_UTF8 = 2,
  PG_STATUS_INVALID_ARGUMENT = 3,
  PG_STATUS_UNKNOWN_PRIMITIVE = 4,
  PG_STATUS_UNREACHABLE = 5,
  PG_STATUS_NUMERICAL = 6,
  PG_STATUS_PANIC = 7,
} PgStatus;

/*
 A built or loaded motion primitive graph.
 */
typedef struct PgGraph PgGraph;

/*
 A benchmark suite: model plus primitive library.
 */
typedef struct PgSuite PgSuite;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or NULL. Valid until the
 next failing call on the same thread.
 */
const char *pg_last_error_message(void);

/*
 # Safety
 `s` must be NULL or a string returned by this library, not yet freed.
 */
void pg_string_free(char *s);

/*
 Builds a built-in suite by name (`pendulum`, `quadruped-analog`, ...).

 # Safety
 `name` must be a NUL-terminated string; `out` must be writable.
 */
enum PgStatus pg_suite_new(const char *name, struct PgSuite **out);

/*
 # Safety
 `s` must be NULL or a handle from [`pg_suite_new`], not yet freed.
 */
void pg_suite_free(struct PgSuite *s);

/*
 # Safety
 `s` must be a live suite handle; `out` must be writable.
 */
enum PgStatus pg_suite_primitive_count(const struct PgSuite *s, size_t *out);

/*
 Runs the full transition sweep for the suite.

 # Safety
 `s` must be a live suite handle; `out` must be writable.
 */
enum PgStatus pg_graph_build(const struct PgSuite *s, struct PgGraph **out);

/*
 # Safety
 `json` must be a NUL-terminated string; `out` must be writable.
 */
enum PgStatus pg_graph_from_json(const char *json, struct PgGraph **out);

/*
 # Safety
 `g` must be NULL or a graph handle from this library, not yet freed.
 */
void pg_graph_free(struct PgGraph *g);

/*
 # Safety
 `g` must be a live graph handle; `nodes` and `edges` must be writable.
 */
enum PgStatus pg_graph_counts(const struct PgGraph *g, size_t *nodes, size_t *edges);

/*
 Canonical JSON. Free the result with [`pg_string_free`].

 # Safety
 `g` must be a live graph handle; `out` must be writable.
 */
enum PgStatus pg_graph_to_json(const struct PgGraph *g, char **out);

/*
 Graphviz DOT. Free the result with [`pg_string_free`].

 # Safety
 `g` must be a live graph handle; `out` must be writable.
 */
enum PgStatus pg_graph_to_dot(const struct PgGraph *g, char **out);

/*
 Depth-first path as a JSON object `{"nodes": [...], "hops": [...]}`.

 # Safety
 `g` must be a live graph handle; `start` and `goal` NUL-terminated; `out` writable.
 */
enum PgStatus pg_plan_path(const struct PgGraph *g,
                           const char *start,
                           const char *goal,
                           char **out);

/*
 One safety-oracle call from `state[0..len]` at entry time `tb`. A
 non-positive `horizon` uses the suite default.

 # Safety
 `s` must be a live suite handle; `primitive` NUL-terminated; `state` must point
 to `len` doubles; `accepted` and `event_time` writable.
 */
enum PgStatus pg_oracle(const struct PgSuite *s,
                        const char *primitive,
                        const double *state,
                        size_t len,
                        double tb,
                        double horizon,
                        bool *accepted,
                        double *event_time);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PRIMGRAPH_H */
