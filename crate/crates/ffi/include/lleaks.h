#ifndef LLEAKS_H
#define LLEAKS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LleaksStatus {
  LLEAKS_STATUS_OK = 0,
  LLEAKS_STATUS_NULL_POINTER = 1,
  LLEAKS_STATUS_INVALID_ARGUMENT = 2,
  LLEAKS_STATUS_IO = 3,
  LLEAKS_STATUS_FORMAT = 4,
  LLEAKS_STATUS_SHAPE = 5,
  LLEAKS_STATUS_PANIC = 6,
} LleaksStatus;

/*
 Opaque network handle.
 */
typedef struct LleaksNetwork LleaksNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or NULL. The pointer is
 valid until the next call into the library on the same thread.
 */
const char *lleaks_last_error(void);

/*
 Loads a checkpoint file.

 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum LleaksStatus lleaks_network_load(const char *path, struct LleaksNetwork **out);

/*
 Builds a freshly initialized registry architecture.

 # Safety
 `arch` must be a NUL-terminated string, `input_shape` must point to
 `rank` values and `out` must be a valid pointer.
 */
enum LleaksStatus lleaks_network_build(const char *arch,
                                       const size_t *input_shape,
                                       size_t rank,
                                       size_t num_classes,
                                       uint64_t seed,
                                       struct LleaksNetwork **out);

/*
 Writes the network as a checkpoint file.

 # Safety
 `net` must come from this library; `path` must be NUL-terminated.
 */
enum LleaksStatus lleaks_network_save(const struct LleaksNetwork *net, const char *path);

/*
 Number of output classes, or 0 for a null handle.

 # Safety
 `net` must be null or come from this library.
 */
size_t lleaks_network_num_classes(const struct LleaksNetwork *net);

/*
 Values per input sample, or 0 for a null handle.

 # Safety
 `net` must be null or come from this library.
 */
size_t lleaks_network_input_len(const struct LleaksNetwork *net);

/*
 Raw logits for `batch` samples laid out row-major in `input`.
 `out_logits` receives `batch * num_classes` values.

 # Safety
 `input` must hold `batch * input_len` values and `out_logits` must have
 room for `out_len` values.
 */
enum LleaksStatus lleaks_network_forward(const struct LleaksNetwork *net,
                                         const double *input,
                                         size_t batch,
                                         double *out_logits,
                                         size_t out_len);

/*
 Releases a handle. Null is ignored.

 # Safety
 `net` must be null or come from this library, and must not be used
 afterwards.
 */
void lleaks_network_free(struct LleaksNetwork *net);

/*
 Tempered softmax of `n` logits into `out`.

 # Safety
 `logits` and `out` must each point to `n` values.
 */
enum LleaksStatus lleaks_mi_softmax(const double *logits,
                                    size_t n,
                                    double temperature,
                                    double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LLEAKS_H */
