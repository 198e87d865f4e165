//! Fixed-step transient simulation of circuits with ideal switches and
//! diodes.
//!
//! The engine advances with the trapezoidal rule on a fixed step. When a
//! step contains switching, it backs up to the switching instant, settles
//! the statuses of all switches with half-step backward-Euler solves, and
//! restarts from consistent post-switching values.
//!
//! ```
//! use emtstep::{netlist, scheme};
//!
//! let circuit = netlist::load(
//!     "L1 1 0 0.005 ic=1\nS1 1 0 initial=closed\nD1 0 1\n\
//!      .event S1 open at=0.00025\n.tran h=1e-4 tstop=1e-3\n",
//! ).unwrap();
//! let out = scheme::run(&circuit, &scheme::SchemeConfig::for_circuit(&circuit)).unwrap();
//! let il = out.waveform.column("i(L1)").unwrap();
//! assert!(il.iter().all(|i| (i - 1.0).abs() < 1e-9));
//! ```

pub mod circuit;
pub mod interpolation;
pub mod methodlab;
pub mod mna;
pub mod netlist;
pub mod oracle;
pub mod scheme;
pub mod switching;
pub mod wave;

pub use circuit::{StateSnapshot, Status, SwitchStatusVector, ValidatedCircuit};
pub use netlist::{parse_netlist, validate, CircuitDescription};
pub use scheme::{run, EngineError, RunOutput, SchemeConfig};
pub use wave::Waveform;
