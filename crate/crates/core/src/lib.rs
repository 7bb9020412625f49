//! Cascaded segmentation of retinal layers and intraretinal fluid in OCT B-scans.
//!
//! The pipeline has four stages:
//!
//! 1. **Stage 1** – an [`lfunet::LfUNet`] partitions each B-scan into
//!    above-ILM / retina / below-BM from three adjacent B-scans.
//! 2. **Distance prior** – ILM and BM are extracted from the stage-1 partition
//!    and turned into a [`distmap::RelativeDistanceMap`].
//! 3. **Stage 2** – a second network takes the three B-scans plus the distance
//!    map and labels five layer regions, two backgrounds, and fluid.
//! 4. **Fluid filter** – a random forest over connected fluid components
//!    removes false-positive fluid regions.
//!
//! The crate is `no_std` + `alloc` when built without the default `std`
//! feature. File formats, the CLI and run directories live in the `octseg`
//! companion crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod augment;
pub mod cascade;
pub mod cv;
pub mod data;
pub mod distmap;
pub mod error;
pub mod fluid;
pub mod forest;
pub mod lfunet;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod phantom;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;
