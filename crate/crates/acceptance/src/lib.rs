//! Holds the `acceptance` test target; run it with
//! `cargo test -p phish-acceptance --test acceptance`.
