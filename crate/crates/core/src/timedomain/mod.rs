//! Light curves, the streaming transient trigger and moving-object linking.

pub mod lightcurve;
pub mod movers;
pub mod trigger;

pub use lightcurve::*;
pub use movers::{link_movers, orphans, MoverConfig, MoverTrack};
pub use trigger::{run_trigger, stream_order, Alert, AlertKind, Trigger, TriggerConfig};
