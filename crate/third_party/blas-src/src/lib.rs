//! Only the OpenBLAS provider is wired up here; which OpenBLAS (system or
//! source build) is decided by the features the dependents enable.

#![no_std]

#[cfg(feature = "openblas")]
extern crate openblas_src as raw;
