/*
 * uniheap.h - C interface to the UniHeap persistent object heap.
 *
 * Every call returns a uh_status. On failure a description of the most
 * recent error on the calling thread is available from
 * uh_last_error_message(). Handles are opaque; a session must outlive every
 * transaction begun on it.
 */
#ifndef UNIHEAP_UNIHEAP_H
#define UNIHEAP_UNIHEAP_H

#include <stddef.h>
#include <stdint.h>
#include <string.h>

#if defined(UNIHEAP_BUILDING_LIBRARY)
#define UH_API __attribute__((visibility("default")))
#else
#define UH_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum uh_status {
  UH_OK = 0,
  UH_IO_ERROR = 1,
  UH_INVALID_CAPACITY = 2,
  UH_OUT_OF_BOUNDS = 3,
  UH_MISALIGNED = 4,
  UH_NAME_TOO_LONG = 5,
  UH_GEOMETRY_TOO_LARGE = 6,
  UH_ALREADY_FORMATTED = 7,
  UH_NOT_A_HEAP = 8,
  UH_VERSION_MISMATCH = 9,
  UH_CORRUPT_HEADER = 10,
  UH_OBJECT_SPACE_FULL = 11,
  UH_ROOT_TABLE_FULL = 12,
  UH_SCHEMA_MISMATCH = 13,
  UH_PLASS_REGION_FULL = 14,
  UH_UNMAPPED_TYPE = 15,
  UH_NOT_FOUND = 16,
  UH_INDEX_OUT_OF_RANGE = 17,
  UH_NESTED_TRANSACTION = 18,
  UH_TYPE_MISMATCH = 19,
  UH_TX_NOT_ACTIVE = 20,
  UH_DANGLING_REFERENCE = 21,
  UH_UNKNOWN_PLASS = 22,
  UH_LOG_FULL = 23,
  UH_GC_ALREADY_RUNNING = 24,
  UH_INVALID_VROOT = 25,
  UH_CORRUPT_HEAP = 26,
  UH_LOCK_HELD = 27,
  UH_READ_ONLY = 28,
  UH_INVALID_ARGUMENT = 29,
  UH_CRASH_INJECTED = 30,
  /* atomic_end lost a conflict; the transaction was aborted, retry it. */
  UH_CONFLICT_RETRY = 64,
  UH_INTERNAL = 65
} uh_status;

/* Field types; the values are the on-media type tags. */
typedef enum uh_type {
  UH_CHAR = 1,
  UH_SHORT = 2,
  UH_INT = 3,
  UH_LONG = 4,
  UH_FLOAT = 5,
  UH_DOUBLE = 6,
  UH_REFERENCE = 7
} uh_type;

/* Object reference: 1 + chunk index in the active object space; 0 is null. */
typedef uint64_t uh_ref;

/* A typed value widened to 64 bits: integers sign-extended, float as its
 * 32-bit pattern, double and references as-is. */
typedef struct uh_value {
  uint32_t type;
  uint64_t bits;
} uh_value;

typedef struct uh_session uh_session;
typedef struct uh_tx uh_tx;

typedef struct uh_field_desc {
  const char* name;
  uint32_t type;
} uh_field_desc;

typedef struct uh_open_options {
  int read_only;
  /* take over a lock file left by a dead process */
  int force_lock;
  /* collect when the active log segment passes 75% */
  int auto_gc;
  /* fence every log record separately (benchmark reference mode) */
  int per_write_fencing;
} uh_open_options;

typedef struct uh_stats {
  uint64_t object_count;
  uint64_t live_count;
  uint64_t plass_count;
  uint64_t log_bytes_used;
  uint64_t fence_count;
  uint64_t active_epoch;
} uh_stats;

typedef struct uh_gc_report {
  uint64_t live;
  uint64_t reclaimed;
  uint64_t log_bytes_before;
  uint64_t log_bytes_after;
  uint64_t active_epoch;
} uh_gc_report;

typedef struct uh_recovery_report {
  uint64_t replayed_txs;
  uint64_t discarded_entries;
  int gc_redone;
} uh_recovery_report;

/* Fills `buf` with up to `cap` live references; returns the total held. */
typedef size_t (*uh_vroot_fn)(void* ctx, uh_ref* buf, size_t cap);
/* forward[i] is the new reference of old reference i + 1, or 0 if reclaimed. */
typedef void (*uh_relocate_fn)(void* ctx, const uh_ref* forward, size_t n);

UH_API const char* uh_status_name(uh_status status);
UH_API const char* uh_last_error_message(void);
UH_API void uh_default_options(uh_open_options* out);

/* Lifecycle. `opts` may be NULL for defaults. */
UH_API uh_status uh_create(const char* path, uint64_t capacity, const char* name, int force,
                           const uh_open_options* opts, uh_session** out);
UH_API uh_status uh_create_in_memory(uint64_t capacity, const char* name, const uh_open_options* opts,
                                     uh_session** out);
UH_API uh_status uh_open(const char* path, const uh_open_options* opts, uh_session** out);
/* Persists header deltas, releases the lock and frees the session. */
UH_API uh_status uh_close(uh_session* session);
UH_API uh_status uh_recovery_info(uh_session* session, uh_recovery_report* out);

/* Durable transactions. */
UH_API uh_status uh_atomic_begin(uh_session* session, uh_tx** out);
/* UH_OK when committed, UH_CONFLICT_RETRY when aborted by a conflict. */
UH_API uh_status uh_atomic_end(uh_tx* tx);
UH_API uh_status uh_abort(uh_tx* tx);
/* Aborts if still active, then frees. */
UH_API void uh_tx_free(uh_tx* tx);
UH_API uh_status uh_tx_id(uh_tx* tx, uint64_t* out);
UH_API uh_status uh_alloc_obj(uh_tx* tx, uint32_t plass, uh_ref* out);
UH_API uh_status uh_alloc_array(uh_tx* tx, uint32_t array_plass, uint64_t length, uh_ref* out);
UH_API uh_status uh_tx_read_field(uh_tx* tx, uh_ref ref, uint32_t field, uh_value* out);
UH_API uh_status uh_write_field(uh_tx* tx, uh_ref ref, uint32_t field, uh_value value);
UH_API uh_status uh_tx_set_root(uh_tx* tx, const char* name, uh_ref ref);

/* Outside transactions. */
UH_API uh_status uh_read_field(uh_session* session, uh_ref ref, uint32_t field, uh_value* out);
UH_API uh_status uh_write_field_atomic(uh_session* session, uh_ref ref, uint32_t field, uh_value value);

/* Durable roots. A null ref deletes. uh_get_root returns UH_NOT_FOUND when absent. */
UH_API uh_status uh_set_root(uh_session* session, const char* name, uh_ref ref);
UH_API uh_status uh_get_root(uh_session* session, const char* name, uh_ref* out);
UH_API uh_status uh_root_count(uh_session* session, size_t* out);
/* Name is NUL-terminated into `name_buf` (24 bytes always suffice). */
UH_API uh_status uh_root_at(uh_session* session, size_t index, char* name_buf, size_t buf_len, uh_ref* out);

/* Plasses. Returned strings live as long as the session. */
UH_API uh_status uh_init_plass(uh_session* session, const char* name, const uh_field_desc* fields, size_t count,
                               uint32_t* out);
UH_API uh_status uh_exists_plass(uh_session* session, const char* name, uint32_t* out);
UH_API uh_status uh_array_plass(uh_session* session, uint32_t element_type, uint32_t* out);
UH_API uh_status uh_plass_count(uh_session* session, uint32_t* out);
UH_API uh_status uh_plass_name(uh_session* session, uint32_t plass, const char** out);
UH_API uh_status uh_plass_is_array(uh_session* session, uint32_t plass, int* out);
UH_API uh_status uh_plass_field_count(uh_session* session, uint32_t plass, uint32_t* out);
UH_API uh_status uh_plass_field(uh_session* session, uint32_t plass, uint32_t index, const char** name,
                                uint32_t* type);
UH_API uh_status uh_field_index(uh_session* session, uint32_t plass, const char* field_name, uint32_t* out);
UH_API uh_status uh_plass_of(uh_session* session, uh_ref ref, uint32_t* out);
/* Field count, or element count for arrays. */
UH_API uh_status uh_slot_count(uh_session* session, uh_ref ref, uint32_t* out);

/* Garbage collection. */
UH_API uh_status uh_request_gc(uh_session* session, uh_gc_report* out);
UH_API uh_status uh_register_runtime(uh_session* session, uh_vroot_fn vroots, uh_relocate_fn relocate, void* ctx,
                                     uint64_t* out_id);
UH_API uh_status uh_unregister_runtime(uh_session* session, uint64_t id);

/* Accounting. */
UH_API uh_status uh_heap_stats(uh_session* session, uh_stats* out);
UH_API uh_status uh_fence_count(uh_session* session, uint64_t* out);

/* language: "java", "python" or "javascript". `declared` (0 for none)
 * narrows a JavaScript number to the numeric type a field declares. */
UH_API uh_status uh_map_foreign_type(const char* language, const char* foreign_type, uint32_t declared,
                                     uint32_t* out);
UH_API const char* uh_type_name(uint32_t type);

/* JSON reports; free with uh_free_string. */
UH_API uh_status uh_info_json(uh_session* session, char** out);
/* Verifies the session's persisted image. */
UH_API uh_status uh_verify_json(uh_session* session, char** out, int* clean);
/* Verifies a heap file as stored, without recovery or locking. */
UH_API uh_status uh_verify_file_json(const char* path, char** out, int* clean);
UH_API void uh_free_string(char* s);

/* Value helpers. */
static inline uh_value uh_char(int8_t v) {
  uh_value r = {UH_CHAR, (uint64_t)(int64_t)v};
  return r;
}
static inline uh_value uh_short(int16_t v) {
  uh_value r = {UH_SHORT, (uint64_t)(int64_t)v};
  return r;
}
static inline uh_value uh_int(int32_t v) {
  uh_value r = {UH_INT, (uint64_t)(int64_t)v};
  return r;
}
static inline uh_value uh_long(int64_t v) {
  uh_value r = {UH_LONG, (uint64_t)v};
  return r;
}
static inline uh_value uh_float(float v) {
  uint32_t u;
  memcpy(&u, &v, sizeof u);
  uh_value r = {UH_FLOAT, u};
  return r;
}
static inline uh_value uh_double(double v) {
  uh_value r = {UH_DOUBLE, 0};
  memcpy(&r.bits, &v, sizeof v);
  return r;
}
static inline uh_value uh_reference(uh_ref v) {
  uh_value r = {UH_REFERENCE, v};
  return r;
}
static inline int64_t uh_as_long(uh_value v) { return (int64_t)v.bits; }
static inline double uh_as_double(uh_value v) {
  double d;
  memcpy(&d, &v.bits, sizeof d);
  return d;
}
static inline float uh_as_float(uh_value v) {
  uint32_t u = (uint32_t)v.bits;
  float f;
  memcpy(&f, &u, sizeof f);
  return f;
}

#ifdef __cplusplus
}
#endif

#endif /* UNIHEAP_UNIHEAP_H */
