//! C ABI for the document toolkit.
//!
//! Documents travel as opaque handles; every function returns a status
//! code and writes results through out-pointers. Strings returned through
//! out-pointers are NUL-terminated UTF-8 owned by this library; release
//! them with `xsamskit_string_free`. On any non-OK status,
//! `xsamskit_last_error` returns a message for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};

use xsamskit::merge::{MatchSpec, ToolConfig};
use xsamskit::model::{Timestamp, XsamsDocument};
use xsamskit::{bibtex, io, merge, validator};

/// Opaque document handle.
pub struct XsamsHandle {
    document: XsamsDocument,
}

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XsamskitStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ParseFailed = 3,
    ValidationFailed = 4,
    MergeFailed = 5,
    InternalError = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: impl Into<String>) {
    let message = message.into().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(message).unwrap_or_default();
    });
}

fn out_string(value: String, out: *mut *mut c_char) -> XsamskitStatus {
    let cstring = match CString::new(value.replace('\0', " ")) {
        Ok(s) => s,
        Err(e) => {
            set_last_error(e.to_string());
            return XsamskitStatus::InternalError;
        }
    };
    unsafe { *out = cstring.into_raw() };
    XsamskitStatus::Ok
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread; never free it.
#[no_mangle]
pub extern "C" fn xsamskit_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Parse an XML document into a handle.
///
/// # Safety
/// `bytes` must point to `len` readable bytes and `out` to a writable
/// pointer slot.
#[no_mangle]
pub unsafe extern "C" fn xsamskit_parse(
    bytes: *const u8,
    len: usize,
    out: *mut *mut XsamsHandle,
) -> XsamskitStatus {
    if bytes.is_null() || out.is_null() {
        set_last_error("null argument");
        return XsamskitStatus::NullArgument;
    }
    let input = std::slice::from_raw_parts(bytes, len);
    match io::parse(input) {
        Ok((document, _)) => {
            *out = Box::into_raw(Box::new(XsamsHandle { document }));
            XsamskitStatus::Ok
        }
        Err(e) => {
            set_last_error(e.to_string());
            XsamskitStatus::ParseFailed
        }
    }
}

/// Release a handle returned by this library. NULL is a no-op.
///
/// # Safety
/// `handle` must have been returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn xsamskit_document_free(handle: *mut XsamsHandle) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Release a string returned by this library. NULL is a no-op.
///
/// # Safety
/// `s` must have been returned through an out-pointer of this library and
/// not yet freed.
#[no_mangle]
pub unsafe extern "C" fn xsamskit_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Serialize a document to its XML text.
///
/// # Safety
/// `handle` must be a live handle, `out` a writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn xsamskit_serialize(
    handle: *const XsamsHandle,
    out: *mut *mut c_char,
) -> XsamskitStatus {
    let Some(handle) = handle.as_ref() else {
        set_last_error("null argument");
        return XsamskitStatus::NullArgument;
    };
    if out.is_null() {
        set_last_error("null argument");
        return XsamskitStatus::NullArgument;
    }
    out_string(io::serialize_string(&handle.document), out)
}

/// Hex digest of the document's canonical form.
///
/// # Safety
/// `handle` must be a live handle, `out` a writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn xsamskit_canonical_digest(
    handle: *const XsamsHandle,
    out: *mut *mut c_char,
) -> XsamskitStatus {
    let Some(handle) = handle.as_ref() else {
        set_last_error("null argument");
        return XsamskitStatus::NullArgument;
    };
    if out.is_null() {
        set_last_error("null argument");
        return XsamskitStatus::NullArgument;
    }
    out_string(io::canonical_digest(&handle.document), out)
}

/// Validate a document. Writes the human-readable report and the number of
/// rule errors; returns ValidationFailed when that number is non-zero.
///
/// # Safety
/// `handle` must be a live handle; `report_out` and `error_count_out` must
/// be writable (either may be NULL to skip that output).
#[no_mangle]
pub unsafe extern "C" fn xsamskit_validate(
    handle: *const XsamsHandle,
    report_out: *mut *mut c_char,
    error_count_out: *mut usize,
) -> XsamskitStatus {
    let Some(handle) = handle.as_ref() else {
        set_last_error("null argument");
        return XsamskitStatus::NullArgument;
    };
    let report = validator::validate(&handle.document);
    if !error_count_out.is_null() {
        *error_count_out = report.errors.len();
    }
    if !report_out.is_null() {
        let status = out_string(validator::explain(&report), report_out);
        if status != XsamskitStatus::Ok {
            return status;
        }
    }
    if report.is_valid() {
        XsamskitStatus::Ok
    } else {
        set_last_error(validator::explain(&report));
        XsamskitStatus::ValidationFailed
    }
}

/// Render the document's bibliography as BibTeX. With `include_self` false,
/// node self-reference sources are skipped.
///
/// # Safety
/// `handle` must be a live handle, `out` a writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn xsamskit_bibtex(
    handle: *const XsamsHandle,
    include_self: bool,
    out: *mut *mut c_char,
) -> XsamskitStatus {
    let Some(handle) = handle.as_ref() else {
        set_last_error("null argument");
        return XsamskitStatus::NullArgument;
    };
    if out.is_null() {
        set_last_error("null argument");
        return XsamskitStatus::NullArgument;
    }
    out_string(
        bibtex::doc_to_bibtex_filtered(&handle.document, include_self),
        out,
    )
}

unsafe fn required_str<'a>(ptr: *const c_char) -> Result<&'a str, XsamskitStatus> {
    if ptr.is_null() {
        set_last_error("null argument");
        return Err(XsamskitStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|e| {
        set_last_error(format!("invalid UTF-8: {e}"));
        XsamskitStatus::InvalidUtf8
    })
}

/// Cross-match merge of a spectroscopic and a collisional document.
/// `match_keys` is a comma-separated quantum-number list such as "J".
/// `tool_comment` may be NULL.
///
/// # Safety
/// Handles must be live; string arguments NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn xsamskit_merge(
    spectroscopic: *const XsamsHandle,
    collisional: *const XsamsHandle,
    match_keys: *const c_char,
    tool_name: *const c_char,
    tool_homepage: *const c_char,
    tool_comment: *const c_char,
    now: *const c_char,
    out: *mut *mut XsamsHandle,
) -> XsamskitStatus {
    let (Some(spec), Some(coll)) = (spectroscopic.as_ref(), collisional.as_ref()) else {
        set_last_error("null argument");
        return XsamskitStatus::NullArgument;
    };
    if out.is_null() {
        set_last_error("null argument");
        return XsamskitStatus::NullArgument;
    }
    let keys = match required_str(match_keys) {
        Ok(s) => s,
        Err(status) => return status,
    };
    let name = match required_str(tool_name) {
        Ok(s) => s,
        Err(status) => return status,
    };
    let homepage = match required_str(tool_homepage) {
        Ok(s) => s,
        Err(status) => return status,
    };
    let now_text = match required_str(now) {
        Ok(s) => s,
        Err(status) => return status,
    };
    let comment = if tool_comment.is_null() {
        None
    } else {
        match required_str(tool_comment) {
            Ok(s) => Some(s.to_string()),
            Err(status) => return status,
        }
    };

    let spec_keys = MatchSpec::new(
        keys.split(',')
            .map(str::trim)
            .filter(|k| !k.is_empty())
            .map(str::to_string),
    );
    let tool = ToolConfig {
        name: name.to_string(),
        homepage_url: homepage.to_string(),
        comment,
    };
    match merge::merge(
        &spec.document,
        &coll.document,
        &spec_keys,
        &tool,
        &Timestamp::new(now_text),
    ) {
        Ok(document) => {
            *out = Box::into_raw(Box::new(XsamsHandle { document }));
            XsamskitStatus::Ok
        }
        Err(e) => {
            set_last_error(e.to_string());
            XsamskitStatus::MergeFailed
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    const MINIMAL: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<XSAMSData xmlns="http://vamdc.org/xml/xsams/1.0" xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance">
  <Origin xsi:type="VamdcNodeOriginType">
    <Timestamp>2015-12-03T14:40:21+01:00</Timestamp>
    <Version versionID="V1" global="false" timestamp="2015-09-01T08:10:12+01:00"/>
    <HomepageUrl>http://example.org</HomepageUrl>
    <Name>Example</Name>
    <Query>select * where ((A = 'x'))</Query>
    <OriginIdentifier>ivo://example</OriginIdentifier>
  </Origin>
</XSAMSData>
"#;

    #[test]
    fn parse_validate_digest_free() {
        unsafe {
            let mut handle: *mut XsamsHandle = ptr::null_mut();
            let status = xsamskit_parse(MINIMAL.as_ptr(), MINIMAL.len(), &mut handle);
            assert_eq!(status, XsamskitStatus::Ok);
            assert!(!handle.is_null());

            let mut digest: *mut c_char = ptr::null_mut();
            assert_eq!(
                xsamskit_canonical_digest(handle, &mut digest),
                XsamskitStatus::Ok
            );
            assert_eq!(CStr::from_ptr(digest).to_str().unwrap().len(), 64);
            xsamskit_string_free(digest);

            let mut report: *mut c_char = ptr::null_mut();
            let mut errors = usize::MAX;
            assert_eq!(
                xsamskit_validate(handle, &mut report, &mut errors),
                XsamskitStatus::Ok
            );
            assert_eq!(errors, 0);
            xsamskit_string_free(report);

            xsamskit_document_free(handle);
        }
    }

    #[test]
    fn parse_failure_sets_error() {
        unsafe {
            let mut handle: *mut XsamsHandle = ptr::null_mut();
            let status = xsamskit_parse(b"nope".as_ptr(), 4, &mut handle);
            assert_eq!(status, XsamskitStatus::ParseFailed);
            assert!(handle.is_null());
            let message = CStr::from_ptr(xsamskit_last_error()).to_str().unwrap();
            assert!(!message.is_empty());
        }
    }

    #[test]
    fn null_arguments_are_rejected() {
        unsafe {
            assert_eq!(
                xsamskit_parse(ptr::null(), 0, ptr::null_mut()),
                XsamskitStatus::NullArgument
            );
            let mut out: *mut c_char = ptr::null_mut();
            assert_eq!(
                xsamskit_serialize(ptr::null(), &mut out),
                XsamskitStatus::NullArgument
            );
            xsamskit_document_free(ptr::null_mut());
            xsamskit_string_free(ptr::null_mut());
        }
    }
}
