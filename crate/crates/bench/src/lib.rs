//! Shared fixtures for the criterion benches.

use boxlift::synth::{builtin_spec, render, Rendered};

/// Renders a built-in scene, panicking on failure.
pub fn fixture(name: &str) -> Rendered {
    render(&builtin_spec(name, 0).expect("built-in scene")).expect("render")
}
