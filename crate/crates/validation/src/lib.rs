//! Holds the `acceptance` test target; `cargo test -p saccadic-validation` runs it.
