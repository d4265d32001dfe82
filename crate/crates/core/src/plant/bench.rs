//! Published models and gains of the physical 4×4 Peltier bench.

use crate::foc::FoTransferFunction;
use crate::CHANNELS;

/// Identified diagonal elements `(K, T, α)`, row-major over the grid.
pub const DIAGONAL: [(f64, f64, f64); CHANNELS] = [
    (1.30, 12.36, 0.5),
    (1.61, 20.13, 0.75),
    (0.79, 17.89, 0.86),
    (1.83, 20.82, 0.5),
    (1.45, 21.51, 0.65),
    (0.67, 35.43, 0.85),
    (0.26, 9.10, 0.65),
    (0.72, 11.60, 0.65),
    (1.11, 23.12, 0.61),
    (1.41, 18.38, 0.5),
    (0.92, 28.27, 1.0),
    (0.61, 16.58, 0.9),
    (0.94, 8.41, 0.65),
    (0.69, 15.62, 0.5),
    (0.30, 7.57, 0.5),
    (0.73, 5.34, 0.9),
];

/// FIT (%) reported for the identified diagonal models.
pub const DIAGONAL_FIT: [f64; CHANNELS] = [
    76.03, 79.88, 80.61, 83.43, 78.02, 78.00, 73.93, 86.59, 75.98, 78.39, 79.96, 75.33, 78.99,
    76.83, 76.08, 80.87,
];

/// Channel-1 models identified at three excitation amplitudes `(K, T, α)`.
pub const FAMILY: [(f64, f64, f64); 3] = [
    (1.3026, 15.153, 0.9),
    (2.3329, 8.3473, 0.6),
    (3.3999, 6.7947, 0.5),
];

/// Nominal channel-1 model used for controller design.
pub const NOMINAL: (f64, f64, f64) = (1.3026, 12.367, 0.5);

/// Decentralized PI gains `(K, I)` running on the bench.
pub const PI_GAINS: [(f64, f64); CHANNELS] = [
    (65.73, 1.17),
    (83.33, 2.01),
    (83.33, 2.44),
    (83.33, 2.83),
    (83.33, 1.5),
    (83.33, 1.5),
    (83.33, 1.5),
    (83.33, 1.5),
    (83.33, 1.5),
    (68.57, 1.23),
    (83.33, 3.34),
    (83.33, 2.35),
    (83.33, 1.5),
    (83.33, 1.5),
    (83.33, 1.5),
    (83.33, 4.45),
];

fn model((k, t, a): (f64, f64, f64)) -> FoTransferFunction {
    FoTransferFunction {
        gain: k,
        time_const: t,
        order: a,
        delay: 0.0,
    }
}

pub fn diagonal() -> [FoTransferFunction; CHANNELS] {
    DIAGONAL.map(model)
}

pub fn family() -> Vec<FoTransferFunction> {
    FAMILY.iter().copied().map(model).collect()
}

pub fn nominal() -> FoTransferFunction {
    model(NOMINAL)
}
