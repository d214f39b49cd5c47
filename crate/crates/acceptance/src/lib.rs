//! Holds the `acceptance` test target: `cargo test -p bwsq-acceptance --test acceptance`.
