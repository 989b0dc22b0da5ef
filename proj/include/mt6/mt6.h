/* C interface to the mt6 library. All functions return an mt6_status; on
 * failure mt6_last_error() describes the problem for the calling thread.
 *
 * Functions that produce text take (buf, cap, len): *len receives the length
 * without the terminating NUL. If buf is NULL or cap <= *len nothing is
 * written and MT6_ERR_BUFFER_TOO_SMALL is returned, so callers can size the
 * buffer with a first call. */
#ifndef MT6_MT6_H_
#define MT6_MT6_H_

#include <stddef.h>
#include <stdint.h>

#if defined(MT6_BUILDING_LIBRARY)
#define MT6_API __attribute__((visibility("default")))
#else
#define MT6_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mt6_status {
  MT6_OK = 0,
  MT6_ERR_INVALID_ARGUMENT = 1,
  MT6_ERR_IO = 2,
  MT6_ERR_FORMAT = 3,
  MT6_ERR_NUMERIC = 4,
  MT6_ERR_STATE = 5,
  MT6_ERR_INTERNAL = 6,
  MT6_ERR_BUFFER_TOO_SMALL = 7
} mt6_status;

/* "ok", "invalid_argument", "io", "format", "numeric", "state", "internal",
 * "buffer_too_small". */
MT6_API const char* mt6_status_name(mt6_status status);
MT6_API const char* mt6_last_error(void);
MT6_API const char* mt6_version(void);

/* ---- run configuration ------------------------------------------------ */

typedef struct mt6_config mt6_config;

MT6_API mt6_status mt6_config_create(mt6_config** out);
MT6_API void mt6_config_destroy(mt6_config* cfg);
/* Merges a key=value file; its values replace earlier ones. */
MT6_API mt6_status mt6_config_load_file(mt6_config* cfg, const char* path);
MT6_API mt6_status mt6_config_set(mt6_config* cfg, const char* key, const char* value);
/* "key=value" */
MT6_API mt6_status mt6_config_apply_override(mt6_config* cfg, const char* assignment);
MT6_API mt6_status mt6_config_get(const mt6_config* cfg, const char* key, char* buf, size_t cap,
                                  size_t* len);
/* The configuration a command would run with, as key=value lines. */
MT6_API mt6_status mt6_config_resolve(const mt6_config* cfg, const char* command, char* buf,
                                      size_t cap, size_t* len);

/* ---- pipeline commands ------------------------------------------------ */

MT6_API size_t mt6_command_count(void);
MT6_API const char* mt6_command_name(size_t index);
/* One "key (default): help" line per accepted key. */
MT6_API mt6_status mt6_command_help(const char* command, char* buf, size_t cap, size_t* len);

MT6_API mt6_status mt6_run(const char* command, const mt6_config* cfg);
MT6_API mt6_status mt6_cmd_gen_data(const mt6_config* cfg);
MT6_API mt6_status mt6_cmd_corrupt(const mt6_config* cfg);
MT6_API mt6_status mt6_cmd_pretrain(const mt6_config* cfg);
MT6_API mt6_status mt6_cmd_finetune(const mt6_config* cfg);
MT6_API mt6_status mt6_cmd_eval(const mt6_config* cfg);
MT6_API mt6_status mt6_cmd_sweep_noise(const mt6_config* cfg);

/* ---- vocabulary ------------------------------------------------------- */

typedef struct mt6_vocab mt6_vocab;

MT6_API mt6_status mt6_vocab_load(const char* path, mt6_vocab** out);
MT6_API void mt6_vocab_destroy(mt6_vocab* vocab);
MT6_API size_t mt6_vocab_size(const mt6_vocab* vocab);
/* *id is -1 for tokens not in the vocabulary. */
MT6_API mt6_status mt6_vocab_token_id(const mt6_vocab* vocab, const char* token, int32_t* id);
/* Whitespace tokenization. *n receives the token count; if ids is NULL or
 * cap < *n nothing is written and MT6_ERR_BUFFER_TOO_SMALL is returned. */
MT6_API mt6_status mt6_vocab_encode(const mt6_vocab* vocab, const char* text, int32_t* ids,
                                    size_t cap, size_t* n);
MT6_API mt6_status mt6_vocab_decode(const mt6_vocab* vocab, const int32_t* ids, size_t n,
                                    char* buf, size_t cap, size_t* len);

/* One corrupted training example of task "sc", "mt", "tpsc" or "tsc" as a
 * JSON object. f is ignored for sc. */
MT6_API mt6_status mt6_make_example(const mt6_vocab* vocab, const char* task, const char* e,
                                    const char* f, double noise_density, double mean_span,
                                    size_t n_groups, uint64_t seed, char* buf, size_t cap,
                                    size_t* len);

/* ---- trained models --------------------------------------------------- */

typedef struct mt6_model mt6_model;

MT6_API mt6_status mt6_model_load(const char* checkpoint_path, const char* vocab_path,
                                  mt6_model** out);
MT6_API void mt6_model_destroy(mt6_model* model);
/* Representation layers (encoder depth + 1) and their width. */
MT6_API size_t mt6_model_layers(const mt6_model* model);
MT6_API size_t mt6_model_dim(const mt6_model* model);
/* Mean-pooled encoder states of one sentence at `layer` (-1: last). out must
 * hold mt6_model_dim() doubles. */
MT6_API mt6_status mt6_model_sentence_embedding(const mt6_model* model, const char* text,
                                                int layer, double* out, size_t cap);
MT6_API mt6_status mt6_model_greedy_decode(const mt6_model* model, const char* input,
                                           size_t max_len, char* buf, size_t cap, size_t* len);

/* ---- metrics ---------------------------------------------------------- */

typedef struct mt6_prf {
  double precision;
  double recall;
  double f1;
} mt6_prf;

typedef struct mt6_link {
  int32_t src;
  int32_t tgt;
} mt6_link;

typedef struct mt6_retrieval {
  double src_to_tgt;
  double tgt_to_src;
  double mean;
} mt6_retrieval;

MT6_API mt6_status mt6_rouge_n(const char* candidate, const char* reference, int n, mt6_prf* out);
MT6_API mt6_status mt6_rouge_l(const char* candidate, const char* reference, mt6_prf* out);
MT6_API mt6_status mt6_qa_scores(const char* pred, const char* gold, double* exact_match,
                                 double* f1);
MT6_API mt6_status mt6_transfer_gap(double en_score, const double* other_scores, size_t n,
                                    double* out);
/* possible may be NULL, meaning possible == sure. */
MT6_API mt6_status mt6_aer(const mt6_link* pred, size_t n_pred, const mt6_link* sure,
                           size_t n_sure, const mt6_link* possible, size_t n_possible,
                           double* out);
/* sim is row-major rows x cols. *n receives the link count. */
MT6_API mt6_status mt6_mutual_argmax_align(const double* sim, size_t rows, size_t cols,
                                           mt6_link* out, size_t cap, size_t* n);
/* src and tgt are row-major n x dim. */
MT6_API mt6_status mt6_retrieval_accuracy(const double* src, const double* tgt, size_t n,
                                          size_t dim, mt6_retrieval* out);

#ifdef __cplusplus
}
#endif

#endif /* MT6_MT6_H_ */
