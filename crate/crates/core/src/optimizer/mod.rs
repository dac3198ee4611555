mod energy;
mod moves;
pub mod oracle;
mod pipeline;

pub use energy::{total_energy, EnergyBreakdown};
pub use moves::{build_move_graph, expansion_move, MoveGraphStats, MoveOutcome, MoveProblem, ENERGY_TOLERANCE};
pub use pipeline::{
    build_constraints, initial_labeling, label_order, scribble_field, segment, write_log_jsonl,
    EnergyProblem, IterationRecord, SegmentOutcome, Setup, SolverConfig,
};
