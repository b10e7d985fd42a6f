//! Holds the `acceptance` test target. Run it with
//! `cargo test -p itar-validation --test acceptance [-- P3 P7 ...]`.
