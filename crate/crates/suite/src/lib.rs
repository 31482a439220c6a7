//! Holds the `acceptance` test target; run it with `cargo test -p wigner-pdc-suite --test acceptance`.
