//! Seeded generators and model builders for the four multistage robust
//! families: selection, assignment, lot-sizing and knapsack.
//!
//! Each family comes in matched variants built from the same drawn data: a
//! quantified model with a universal constraint system (`QipPu`, where the
//! family has one), an equivalent quantified model without universal rows
//! (`Qip`), and a hand-built deterministic equivalent (`Dep`) that serves as
//! a fixture against the generic flattener. Builders are pure; all
//! randomness flows through [`rng::SplitMix64`] with a documented draw
//! order, so identical parameters and seed give identical instances.

pub mod assignment;
pub mod knapsack;
pub mod lotsizing;
pub mod rng;
pub mod selection;

pub use assignment::{
    assignment_dep_from, assignment_qip_from, assignment_qip_pu_from, build_assignment_dep,
    build_assignment_qip, build_assignment_qip_pu, AssignmentData, AssignmentParams,
};
pub use knapsack::{
    build_knapsack_dep, build_knapsack_qip_pu, knapsack_alpha, knapsack_beta, knapsack_dep_from,
    knapsack_qip_pu_from, KnapsackData, KnapsackParams,
};
pub use lotsizing::{
    build_lot_sizing_dep, build_lot_sizing_qip, lot_sizing_dep_from, lot_sizing_qip_from,
    LotSizingData, LotSizingParams,
};
pub use selection::{
    build_selection_dep, build_selection_qip, build_selection_qip_pu, selection_dep_from,
    selection_qip_from, selection_qip_pu_from, SelectionData, SelectionParams,
};

use crate::dep::MipInstance;
use crate::model::QipInstance;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParamError {
    #[error("selection requires items = 2·picks (got items={items}, picks={picks})")]
    SelectionShape { items: usize, picks: usize },
    #[error("invalid parameters: {0}")]
    Invalid(String),
    #[error("family {family} has no {model} variant")]
    UnsupportedModel { family: &'static str, model: ModelKind },
}

/// Which of the matched model variants to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    QipPu,
    Qip,
    Dep,
}

impl ModelKind {
    pub fn parse(s: &str) -> Option<ModelKind> {
        match s {
            "qippu" => Some(ModelKind::QipPu),
            "qip" => Some(ModelKind::Qip),
            "dep" => Some(ModelKind::Dep),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::QipPu => "qippu",
            ModelKind::Qip => "qip",
            ModelKind::Dep => "dep",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Parameters of one concrete instance of any family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FamilyParams {
    Selection(SelectionParams),
    Assignment(AssignmentParams),
    LotSizing(LotSizingParams),
    Knapsack(KnapsackParams),
}

impl FamilyParams {
    pub fn family_name(&self) -> &'static str {
        match self {
            FamilyParams::Selection(_) => "selection",
            FamilyParams::Assignment(_) => "assignment",
            FamilyParams::LotSizing(_) => "lotsizing",
            FamilyParams::Knapsack(_) => "knapsack",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            FamilyParams::Selection(p) => p.seed,
            FamilyParams::Assignment(p) => p.seed,
            FamilyParams::LotSizing(p) => p.seed,
            FamilyParams::Knapsack(p) => p.seed,
        }
    }

    /// Stable identifier, e.g. `sel-n4-p2-T1-N2-s0`.
    pub fn instance_id(&self) -> String {
        match self {
            FamilyParams::Selection(p) => format!(
                "sel-n{}-p{}-T{}-N{}-s{}",
                p.items, p.picks, p.periods, p.scenarios, p.seed
            ),
            FamilyParams::Assignment(p) => {
                format!("ass-n{}-T{}-N{}-s{}", p.size, p.periods, p.scenarios, p.seed)
            }
            FamilyParams::LotSizing(p) => format!(
                "lot-B{}-U{}-T{}-s{}",
                p.basic_orders, p.urgent_orders, p.periods, p.seed
            ),
            FamilyParams::Knapsack(p) => {
                format!("kna-n{}-T{}-s{}", p.items, p.periods, p.seed)
            }
        }
    }

    /// The quantified model the family is canonically solved with.
    pub fn quantified_model(&self) -> ModelKind {
        match self {
            FamilyParams::LotSizing(_) => ModelKind::Qip,
            _ => ModelKind::QipPu,
        }
    }

    /// Builds a quantified variant (`QipPu` or `Qip`).
    pub fn build_qip(&self, model: ModelKind) -> Result<QipInstance, ParamError> {
        match (self, model) {
            (FamilyParams::Selection(p), ModelKind::QipPu) => build_selection_qip_pu(p),
            (FamilyParams::Selection(p), ModelKind::Qip) => build_selection_qip(p),
            (FamilyParams::Assignment(p), ModelKind::QipPu) => build_assignment_qip_pu(p),
            (FamilyParams::Assignment(p), ModelKind::Qip) => build_assignment_qip(p),
            (FamilyParams::LotSizing(p), ModelKind::Qip) => build_lot_sizing_qip(p),
            (FamilyParams::Knapsack(p), ModelKind::QipPu) => build_knapsack_qip_pu(p),
            (_, model) => Err(ParamError::UnsupportedModel {
                family: self.family_name(),
                model,
            }),
        }
    }

    /// Builds the hand-built deterministic equivalent.
    pub fn build_dep(&self) -> Result<MipInstance, ParamError> {
        match self {
            FamilyParams::Selection(p) => build_selection_dep(p),
            FamilyParams::Assignment(p) => build_assignment_dep(p),
            FamilyParams::LotSizing(p) => build_lot_sizing_dep(p),
            FamilyParams::Knapsack(p) => build_knapsack_dep(p),
        }
    }
}
