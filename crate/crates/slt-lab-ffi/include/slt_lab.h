/* C interface to the slt-lab network, scaling, and ticket-construction
 * APIs. Kept in sync with the Rust exports by the crate's header test.
 *
 * Conventions:
 *  - Networks are opaque handles; constructors return a valid pointer
 *    or NULL, and every handle is released with slt_network_free().
 *  - Fallible calls return a status code (SLT_OK = 0). The thread-local
 *    message from slt_last_error() describes the most recent failure on
 *    the calling thread.
 *  - Sample buffers are row-major with one sample per row.
 */

#ifndef SLT_LAB_H
#define SLT_LAB_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

enum slt_status {
    SLT_OK = 0,
    SLT_NULL_ARGUMENT = 1,
    SLT_INVALID_ARGUMENT = 2,
    SLT_IO_ERROR = 3,
    SLT_RUNTIME_ERROR = 4,
};

enum slt_scheme {
    SLT_SCHEME_UNIFORM = 0,
    SLT_SCHEME_NORMAL = 1,
    SLT_SCHEME_LOOKS_LINEAR = 2,
};

/* Opaque network handle. */
typedef struct slt_network slt_network;

/* Copies the most recent error message on this thread into buf
 * (NUL-terminated, truncated to cap bytes) and returns the full message
 * length in bytes, excluding the terminator; 0 when no error has
 * occurred. buf may be NULL to query the length alone. */
size_t slt_last_error(char *buf, size_t cap);

/* Library version as a static NUL-terminated string. */
const char *slt_version(void);

/* Samples a fresh network with variance-preserving ("He") layer scales.
 * widths lists the layer widths from input to output (at least two
 * entries, all positive); output_linear skips the activation on the
 * final layer; scheme is one of the SLT_SCHEME_* values; zero_bias
 * forces all biases to zero. Returns NULL on failure. */
slt_network *slt_network_init_he(const size_t *widths,
                                 size_t n_widths,
                                 int output_linear,
                                 int scheme,
                                 int zero_bias,
                                 uint64_t seed);

/* Loads a network saved by slt_network_save or the slt-lab CLI. A
 * stored mask is applied, zeroing the pruned parameters. Returns NULL
 * on failure. */
slt_network *slt_network_load(const char *path);

/* Saves the network as JSON readable by slt_network_load and the CLI. */
int slt_network_save(const slt_network *net, const char *path);

/* Releases a handle. NULL is ignored. */
void slt_network_free(slt_network *net);

/* Shape queries; each returns 0 if net is NULL. */
size_t slt_network_input_dim(const slt_network *net);
size_t slt_network_output_dim(const slt_network *net);
size_t slt_network_depth(const slt_network *net);

/* Evaluates the network on n_samples row-major samples of input_dim
 * doubles each, writing n_samples * output_dim doubles to outputs.
 * output_cap guards the destination and must be at least the required
 * length. */
int slt_network_forward(const slt_network *net,
                        const double *inputs,
                        size_t n_samples,
                        size_t input_dim,
                        double *outputs,
                        size_t output_cap);

/* Multiplies the network's output by lambda by folding the factor into
 * the parameters. lambda must be positive and finite. */
int slt_network_scale(slt_network *net, double lambda);

/* Builds a strong lottery ticket approximating target: samples a wider
 * random "mother" network, prunes it by subset-sum matching, and
 * returns the masked result with the output scale folded in, so the
 * returned network approximates the target directly. On success, when
 * sup_error_out is non-NULL it receives the measured sup-norm error
 * over fresh probe inputs. Returns NULL on failure. */
slt_network *slt_construct_ticket(const slt_network *target,
                                  double epsilon,
                                  double delta,
                                  uint64_t seed,
                                  double *sup_error_out);

#ifdef __cplusplus
}
#endif

#endif /* SLT_LAB_H */
