//! Exact discrete spectral-inequality constants (in progress).
