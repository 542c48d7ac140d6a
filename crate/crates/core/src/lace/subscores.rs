use serde::{Deserialize, Serialize};

/// The four LACE inputs for one admission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaceComponents {
    pub los_days: u32,
    pub acute: bool,
    pub cci: u32,
    pub ed_visits_6mo: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaceScore {
    pub l: u32,
    pub a: u32,
    pub c: u32,
    pub e: u32,
    pub total: u32,
}

/// LACE point lookup.
///
/// The 7-13 day length-of-stay band scores 6 points, and stays of 14 days or
/// more score 7. Much of the LACE literature scores the 7-13 band as 5; this
/// table keeps 6.
pub fn lace_subscores(c: LaceComponents) -> LaceScore {
    let l = match c.los_days {
        0 => 0,
        1 => 1,
        2 => 2,
        3 => 3,
        4..=6 => 4,
        7..=13 => 6,
        _ => 7,
    };
    let a = if c.acute { 3 } else { 0 };
    let cc = match c.cci {
        0..=3 => c.cci,
        _ => 5,
    };
    let e = c.ed_visits_6mo.min(4);
    LaceScore { l, a, c: cc, e, total: l + a + cc + e }
}
