#ifndef MEDIANSCOPE_H
#define MEDIANSCOPE_H

/* Generated by cbindgen from medianscope-ffi. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MsStatus {
  MS_STATUS_OK = 0,
  MS_STATUS_NULL_POINTER = 1,
  MS_STATUS_INVALID_UTF8 = 2,
  MS_STATUS_CONFIG = 3,
  MS_STATUS_MODULE = 4,
  MS_STATUS_MISMATCH = 5,
  MS_STATUS_OUT_OF_RANGE = 6,
  // No nonterminating ultrafilter exists (finite complex).
  MS_STATUS_BOUNDED = 7,
  MS_STATUS_PANIC = 8,
} MsStatus;

// A truncated ball of a provider.
typedef struct MsBall MsBall;

// A complex provider (tree, grid, RAAG, product or explicit complex).
typedef struct MsProvider MsProvider;

// An ultrafilter approximation over the hyperplanes of one ball.
typedef struct MsUltrafilter MsUltrafilter;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer stays
// valid until the next failing call on the same thread.
const char *ms_last_error(void);

// Parses a provider block such as `{"kind": "tree", "valence": 3}`.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer to write to.
// The handle written to `out` must be released with [`ms_provider_free`].
enum MsStatus ms_provider_from_json(const char *json, struct MsProvider **out);

// # Safety
// `p` must be NULL or a handle from [`ms_provider_from_json`] not yet freed.
void ms_provider_free(struct MsProvider *p);

// Builds the ball whose trusted region has radius `inner_radius`. Finite
// explicit complexes are built whole and `inner_radius` is ignored.
//
// # Safety
// `p` must be a live provider handle and `out` a valid pointer to write to.
// The handle written to `out` must be released with [`ms_ball_free`].
enum MsStatus ms_ball_build(const struct MsProvider *p, uint32_t inner_radius, struct MsBall **out);

// # Safety
// `b` must be NULL or a handle from [`ms_ball_build`] not yet freed.
void ms_ball_free(struct MsBall *b);

// Number of vertices, or 0 for NULL.
//
// # Safety
// `b` must be NULL or a live ball handle.
size_t ms_ball_vertex_count(const struct MsBall *b);

// Number of hyperplanes, or 0 for NULL.
//
// # Safety
// `b` must be NULL or a live ball handle.
size_t ms_ball_hyperplane_count(const struct MsBall *b);

// Index of the vertex called `name` (`e`, `ab`, `(1,-2)`, `(a|bc)`...).
//
// # Safety
// `b` must be a live ball handle, `name` a NUL-terminated string and `out`
// a valid pointer to write to.
enum MsStatus ms_ball_lookup(const struct MsBall *b, const char *name, size_t *out);

// Name of vertex `v` as a new string; free it with [`ms_string_free`].
// Returns NULL if `b` is NULL or `v` is out of range.
//
// # Safety
// `b` must be NULL or a live ball handle.
char *ms_ball_vertex_name(const struct MsBall *b, size_t v);

// Number of hyperplanes separating two trusted vertices.
//
// # Safety
// `b` must be a live ball handle and `out` a valid pointer to write to.
enum MsStatus ms_ball_distance(const struct MsBall *b, size_t v, size_t w, size_t *out);

// Median of three trusted vertices.
//
// # Safety
// `b` must be a live ball handle and `out` a valid pointer to write to.
enum MsStatus ms_ball_median(const struct MsBall *b, size_t u, size_t v, size_t w, size_t *out);

// Greedy nonterminating ultrafilter of the ball. Returns `Bounded` on finite
// complexes.
//
// # Safety
// `b` must be a live ball handle and `out` a valid pointer to write to. The
// handle written to `out` must be released with [`ms_ultrafilter_free`] and
// only used with the ball it was built from.
enum MsStatus ms_construct_nonterminating(const struct MsBall *b, struct MsUltrafilter **out);

// # Safety
// `u` must be NULL or a handle from [`ms_construct_nonterminating`] not yet freed.
void ms_ultrafilter_free(struct MsUltrafilter *u);

// Orientation of hyperplane `h`: `+1` or `-1`, or 0 if out of range.
//
// # Safety
// `u` must be NULL or a live ultrafilter handle.
int32_t ms_ultrafilter_orientation(const struct MsUltrafilter *u, size_t h);

// Writes whether every chosen halfspace within `depth` strictly contains
// another chosen one.
//
// # Safety
// `b` and `u` must be live handles, `u` built from `b`, and `pass` a valid
// pointer to write to.
enum MsStatus ms_check_nonterminating(const struct MsBall *b,
                                      const struct MsUltrafilter *u,
                                      uint32_t depth,
                                      bool *pass);

// Runs an experiment spec (JSON) and writes its CSV to `csv_out`. `operation`
// may be NULL when the spec names its own. On `Mismatch` the comparison CSV
// is still written.
//
// # Safety
// `spec_json` must be a NUL-terminated string, `operation` NULL or a
// NUL-terminated string, and `csv_out` a valid pointer to write to. The
// string written to `csv_out` must be released with [`ms_string_free`].
enum MsStatus ms_run_experiment(const char *spec_json, const char *operation, char **csv_out);

// # Safety
// `s` must be NULL or a string returned by this library and not yet freed.
void ms_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MEDIANSCOPE_H */
