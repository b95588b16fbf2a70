//! Heat evolution and observability (in progress).
