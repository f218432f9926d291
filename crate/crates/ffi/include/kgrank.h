#ifndef KGRANK_H
#define KGRANK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum KgStatus {
  KG_STATUS_OK = 0,
  /**
   * Null pointer, bad UTF-8 or out-of-range argument.
   */
  KG_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Missing or malformed input file.
   */
  KG_STATUS_INPUT = 2,
  /**
   * Internal invariant violation.
   */
  KG_STATUS_INTERNAL = 3,
  /**
   * A Rust panic was caught.
   */
  KG_STATUS_PANIC = 4,
} KgStatus;

/**
 * Ranked `(doc id, score)` list.
 */
typedef struct KgHits KgHits;

/**
 * BM25 index handle.
 */
typedef struct KgIndex KgIndex;

/**
 * Trained ranker, optionally with a knowledge graph for entity linking.
 */
typedef struct KgRanker KgRanker;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next kgrank call on the same thread.
 */
const char *kgrank_last_error(void);

/**
 * Library version, static storage.
 */
const char *kgrank_version(void);

/**
 * Build an index from a JSONL corpus file.
 *
 * # Safety
 * `corpus_path` must be a NUL-terminated string; `out` must be writable.
 */
enum KgStatus kgrank_index_build(const char *corpus_path, struct KgIndex **out);

/**
 * # Safety
 * `index_path` must be a NUL-terminated string; `out` must be writable.
 */
enum KgStatus kgrank_index_load(const char *index_path, struct KgIndex **out);

/**
 * # Safety
 * `index` must come from this library; `index_path` must be NUL-terminated.
 */
enum KgStatus kgrank_index_save(const struct KgIndex *index, const char *index_path);

/**
 * # Safety
 * `index` must come from this library; `out` must be writable.
 */
enum KgStatus kgrank_index_num_docs(const struct KgIndex *index, size_t *out);

/**
 * BM25 top-`k` for a free-text query. `k` must be positive.
 *
 * # Safety
 * `index` must come from this library; `query` must be NUL-terminated;
 * `out` must be writable.
 */
enum KgStatus kgrank_index_search(const struct KgIndex *index,
                                  const char *query,
                                  size_t k,
                                  struct KgHits **out);

/**
 * # Safety
 * `index` must come from this library and not be used afterwards. Null is a no-op.
 */
void kgrank_index_free(struct KgIndex *index);

/**
 * Number of hits; 0 for null.
 *
 * # Safety
 * `hits` must be null or come from this library.
 */
size_t kgrank_hits_len(const struct KgHits *hits);

/**
 * Document id at `i`; the pointer lives as long as `hits`. Null when out of range.
 *
 * # Safety
 * `hits` must be null or come from this library.
 */
const char *kgrank_hits_doc_id(const struct KgHits *hits, size_t i);

/**
 * # Safety
 * `hits` must come from this library; `out` must be writable.
 */
enum KgStatus kgrank_hits_score(const struct KgHits *hits, size_t i, double *out);

/**
 * # Safety
 * `hits` must come from this library and not be used afterwards. Null is a no-op.
 */
void kgrank_hits_free(struct KgHits *hits);

/**
 * Load a ranker checkpoint. `kg_path` and `lexicon_path` may be null; without a
 * graph every pair is scored with an empty subgraph.
 *
 * # Safety
 * Non-null strings must be NUL-terminated; `out` must be writable.
 */
enum KgStatus kgrank_ranker_load(const char *checkpoint_path,
                                 const char *kg_path,
                                 const char *lexicon_path,
                                 struct KgRanker **out);

/**
 * Relevance score (true minus false logit) of one query/document pair.
 *
 * # Safety
 * `ranker` must come from this library; strings must be NUL-terminated;
 * `out` must be writable.
 */
enum KgStatus kgrank_ranker_score(const struct KgRanker *ranker,
                                  const char *query,
                                  const char *document,
                                  double *out);

/**
 * # Safety
 * `ranker` must come from this library and not be used afterwards. Null is a no-op.
 */
void kgrank_ranker_free(struct KgRanker *ranker);

/**
 * Run the built-in self-checks. `passed` and `total` may be null.
 * Returns `Internal` when any check fails.
 *
 * # Safety
 * Non-null out pointers must be writable.
 */
enum KgStatus kgrank_selftest(size_t *passed, size_t *total);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KGRANK_H */
