//! Holds the `acceptance` test target. Kept as its own package so that it
//! runs after the core test suites.
