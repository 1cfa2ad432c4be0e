use rand::Rng;

use super::{RepairError, Result, Strategy};
use crate::moo::Individual;

/// Picks one member of a front whose first objective is negated robustness
/// and whose second is the distance to the original control.
///
/// Among members with robustness >= 0, `MinSat` takes the least robust,
/// `Similar` the closest and `Random` a uniform draw. When no member is
/// satisfying, every strategy takes the most robust one.
pub fn select_optimum<'a, R: Rng + ?Sized>(
    front: &'a [Individual],
    strategy: Strategy,
    rng: &mut R,
) -> Result<&'a Individual> {
    if front.is_empty() {
        return Err(RepairError::EmptyFront);
    }
    let by = |k: usize| move |a: &&Individual, b: &&Individual| a.objectives[k].total_cmp(&b.objectives[k]);
    let sat: Vec<&Individual> = front.iter().filter(|i| i.objectives[0] <= 0.0).collect();
    if sat.is_empty() {
        return Ok(front.iter().min_by(by(0)).expect("non-empty front"));
    }
    let pick = match strategy {
        Strategy::MinSat => sat.iter().copied().max_by(by(0)),
        Strategy::Similar => sat.iter().copied().min_by(by(1)),
        Strategy::Random => Some(sat[rng.gen_range(0..sat.len())]),
    };
    Ok(pick.expect("non-empty satisfying set"))
}
