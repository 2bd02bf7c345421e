#ifndef XSAMSKIT_H
#define XSAMSKIT_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum {
  XSAMSKIT_STATUS_OK = 0,
  XSAMSKIT_STATUS_NULL_ARGUMENT = 1,
  XSAMSKIT_STATUS_INVALID_UTF8 = 2,
  XSAMSKIT_STATUS_PARSE_FAILED = 3,
  XSAMSKIT_STATUS_VALIDATION_FAILED = 4,
  XSAMSKIT_STATUS_MERGE_FAILED = 5,
  XSAMSKIT_STATUS_INTERNAL_ERROR = 6,
} XsamskitStatus;

/**
 * Opaque document handle.
 */
typedef struct XsamsHandle XsamsHandle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread. The pointer
 * stays valid until the next failing call on the same thread; never free it.
 */
const char *xsamskit_last_error(void);

/**
 * Parse an XML document into a handle.
 *
 * # Safety
 * `bytes` must point to `len` readable bytes and `out` to a writable
 * pointer slot.
 */
XsamskitStatus xsamskit_parse(const uint8_t *bytes, uintptr_t len, XsamsHandle **out);

/**
 * Release a handle returned by this library. NULL is a no-op.
 *
 * # Safety
 * `handle` must have been returned by this library and not yet freed.
 */
void xsamskit_document_free(XsamsHandle *handle);

/**
 * Release a string returned by this library. NULL is a no-op.
 *
 * # Safety
 * `s` must have been returned through an out-pointer of this library and
 * not yet freed.
 */
void xsamskit_string_free(char *s);

/**
 * Serialize a document to its XML text.
 *
 * # Safety
 * `handle` must be a live handle, `out` a writable pointer slot.
 */
XsamskitStatus xsamskit_serialize(const XsamsHandle *handle, char **out);

/**
 * Hex digest of the document's canonical form.
 *
 * # Safety
 * `handle` must be a live handle, `out` a writable pointer slot.
 */
XsamskitStatus xsamskit_canonical_digest(const XsamsHandle *handle, char **out);

/**
 * Validate a document. Writes the human-readable report and the number of
 * rule errors; returns ValidationFailed when that number is non-zero.
 *
 * # Safety
 * `handle` must be a live handle; `report_out` and `error_count_out` must
 * be writable (either may be NULL to skip that output).
 */
XsamskitStatus xsamskit_validate(const XsamsHandle *handle,
                                 char **report_out,
                                 uintptr_t *error_count_out);

/**
 * Render the document's bibliography as BibTeX. With `include_self` false,
 * node self-reference sources are skipped.
 *
 * # Safety
 * `handle` must be a live handle, `out` a writable pointer slot.
 */
XsamskitStatus xsamskit_bibtex(const XsamsHandle *handle, bool include_self, char **out);

/**
 * Cross-match merge of a spectroscopic and a collisional document.
 * `match_keys` is a comma-separated quantum-number list such as "J".
 * `tool_comment` may be NULL.
 *
 * # Safety
 * Handles must be live; string arguments NUL-terminated; `out` writable.
 */
XsamskitStatus xsamskit_merge(const XsamsHandle *spectroscopic,
                              const XsamsHandle *collisional,
                              const char *match_keys,
                              const char *tool_name,
                              const char *tool_homepage,
                              const char *tool_comment,
                              const char *now,
                              XsamsHandle **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* XSAMSKIT_H */
