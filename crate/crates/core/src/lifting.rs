//! Ghost-dimension lifting diagnostics (in progress).
