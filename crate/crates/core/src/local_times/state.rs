use rustc_hash::FxHashMap;

use super::{LocalTimeError, ObservableF};
use crate::walk::Site;

/// Coordinates are packed 21 bits apiece while `|c| < 2^20` and `d <= 3`.
const PACK_BITS: u32 = 21;
const PACK_LIMIT: i64 = 1 << (PACK_BITS - 1);
const PACK_MASK: u64 = (1 << PACK_BITS) - 1;

#[inline]
fn pack(coords: &[i64]) -> Option<u64> {
    let mut key = 0u64;
    for &c in coords {
        if c <= -PACK_LIMIT || c >= PACK_LIMIT {
            return None;
        }
        key = (key << PACK_BITS) | ((c + PACK_LIMIT) as u64 & PACK_MASK);
    }
    Some(key)
}

fn unpack(mut key: u64, dim: usize) -> Vec<i64> {
    let mut coords = vec![0; dim];
    for c in coords.iter_mut().rev() {
        *c = (key & PACK_MASK) as i64 - PACK_LIMIT;
        key >>= PACK_BITS;
    }
    coords
}

#[derive(Clone, Debug)]
enum SiteCounts {
    Packed(FxHashMap<u64, u32>),
    Wide(FxHashMap<Box<[i64]>, u32>),
}

impl SiteCounts {
    fn new(dim: usize) -> Self {
        if dim <= 3 {
            SiteCounts::Packed(FxHashMap::default())
        } else {
            SiteCounts::Wide(FxHashMap::default())
        }
    }

    fn len(&self) -> usize {
        match self {
            SiteCounts::Packed(m) => m.len(),
            SiteCounts::Wide(m) => m.len(),
        }
    }

    fn widen(&mut self, dim: usize) {
        if let SiteCounts::Packed(m) = self {
            let wide = m.drain().map(|(k, v)| (unpack(k, dim).into_boxed_slice(), v)).collect();
            *self = SiteCounts::Wide(wide);
        }
    }

    /// Increments the count at `pos`, returning the count before the visit.
    #[inline]
    fn visit(&mut self, pos: &[i64]) -> u32 {
        if let SiteCounts::Packed(m) = self {
            if let Some(key) = pack(pos) {
                let slot = m.entry(key).or_insert(0);
                *slot += 1;
                return *slot - 1;
            }
            self.widen(pos.len());
        }
        let SiteCounts::Wide(m) = self else { unreachable!() };
        if let Some(slot) = m.get_mut(pos) {
            *slot += 1;
            return *slot - 1;
        }
        m.insert(pos.into(), 1);
        0
    }

    fn get(&self, pos: &[i64]) -> u32 {
        match self {
            SiteCounts::Packed(m) => pack(pos).and_then(|k| m.get(&k).copied()).unwrap_or(0),
            SiteCounts::Wide(m) => m.get(pos).copied().unwrap_or(0),
        }
    }
}

/// Multiplicity histogram: `q[j]` sites have been visited exactly `j` times.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Histogram {
    q: Vec<u64>,
}

impl Histogram {
    pub fn from_counts(pairs: impl IntoIterator<Item = (u32, u64)>) -> Self {
        let mut h = Histogram::default();
        for (j, c) in pairs {
            let j = j as usize;
            if h.q.len() <= j {
                h.q.resize(j + 1, 0);
            }
            h.q[j] += c;
        }
        h.trim();
        h
    }

    fn trim(&mut self) {
        while self.q.last() == Some(&0) {
            self.q.pop();
        }
    }

    pub fn get(&self, j: u32) -> u64 {
        self.q.get(j as usize).copied().unwrap_or(0)
    }

    /// Non-zero entries `(j, Q(j))` in increasing `j`.
    pub fn iter(&self) -> impl Iterator<Item = (u32, u64)> + '_ {
        self.q.iter().enumerate().skip(1).filter(|(_, &c)| c > 0).map(|(j, &c)| (j as u32, c))
    }

    /// `Σ_j Q(j)`.
    pub fn range(&self) -> u64 {
        self.q.iter().skip(1).sum()
    }

    /// `Σ_j j Q(j)`, which equals `n + 1`.
    pub fn total_visits(&self) -> u64 {
        self.iter().map(|(j, c)| j as u64 * c).sum()
    }

    pub fn l_max(&self) -> u32 {
        self.iter().last().map_or(0, |(j, _)| j)
    }

    /// `G(f) = Σ_j f(j) Q(j)`.
    pub fn functional(&self, f: &ObservableF) -> f64 {
        self.iter().map(|(j, c)| f.eval(j as u64) * c as f64).sum()
    }

    /// `L(α) = Σ_j j^α Q(j)`.
    pub fn functional_l(&self, alpha: f64) -> Result<f64, LocalTimeError> {
        Ok(self.functional(&ObservableF::power(alpha)?))
    }

    #[inline]
    fn shift(&mut self, from: u32, to: u32) {
        if from > 0 {
            self.q[from as usize] -= 1;
        }
        let to = to as usize;
        if self.q.len() <= to {
            self.q.resize(to + 1, 0);
        }
        self.q[to] += 1;
    }
}

/// Handle to an observable registered with a [`LocalTimeState`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ObservableId(pub usize);

#[derive(Clone, Debug)]
struct Running {
    f: ObservableF,
    values: Vec<f64>,
    total: f64,
}

impl Running {
    fn new(f: ObservableF) -> Self {
        Running { f, values: vec![0.0], total: 0.0 }
    }

    #[inline]
    fn value_at(&mut self, i: u32) -> f64 {
        let i = i as usize;
        while self.values.len() <= i {
            let next = self.f.eval(self.values.len() as u64);
            self.values.push(next);
        }
        self.values[i]
    }

    #[inline]
    fn bump(&mut self, from: u32, to: u32) {
        let delta = self.value_at(to) - self.value_at(from);
        self.total += delta;
    }
}

/// Snapshot of a trajectory's statistics at time `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub n: u64,
    pub range: u64,
    pub l_max: u32,
    /// Running `G_n(f)` per registered observable, in registration order.
    pub g: Vec<f64>,
    /// `L_n(α)` per requested exponent.
    pub l: Vec<f64>,
    pub histogram: Option<Histogram>,
}

/// Local-time field of one trajectory, updated one increment at a time.
///
/// The walk starts at the origin and that visit counts, so a fresh state has
/// `l(0, 0) = 1` and `Q_0(1) = 1`.
#[derive(Clone, Debug)]
pub struct LocalTimeState {
    dim: usize,
    position: Vec<i64>,
    counts: SiteCounts,
    histogram: Histogram,
    n: u64,
    l_max: u32,
    running: Vec<Running>,
}

impl LocalTimeState {
    pub fn new(dim: usize, observables: impl IntoIterator<Item = ObservableF>) -> Self {
        let mut state = LocalTimeState {
            dim,
            position: vec![0; dim],
            counts: SiteCounts::new(dim),
            histogram: Histogram::default(),
            n: 0,
            l_max: 0,
            running: observables.into_iter().map(Running::new).collect(),
        };
        state.visit_current();
        state
    }

    #[inline]
    fn visit_current(&mut self) {
        let before = self.counts.visit(&self.position);
        let after = before + 1;
        self.histogram.shift(before, after);
        if after > self.l_max {
            self.l_max = after;
        }
        for r in &mut self.running {
            r.bump(before, after);
        }
    }

    /// Moves the walk by `increment` and records the visit.
    #[inline]
    pub fn ingest_offset(&mut self, increment: &[i64]) {
        debug_assert_eq!(increment.len(), self.dim);
        for (x, dx) in self.position.iter_mut().zip(increment) {
            *x += dx;
        }
        self.n += 1;
        self.visit_current();
    }

    #[inline]
    pub fn ingest_step(&mut self, increment: &Site) {
        self.ingest_offset(increment.coords());
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn position(&self) -> &[i64] {
        &self.position
    }

    pub fn range(&self) -> u64 {
        self.counts.len() as u64
    }

    pub fn l_max(&self) -> u32 {
        self.l_max
    }

    pub fn histogram(&self) -> &Histogram {
        &self.histogram
    }

    /// `l(n, x)`.
    pub fn local_time(&self, site: &Site) -> u32 {
        self.counts.get(site.coords())
    }

    pub fn observables(&self) -> impl Iterator<Item = &ObservableF> {
        self.running.iter().map(|r| &r.f)
    }

    /// Running `G_n(f)` for a registered observable.
    pub fn functional_g(&self, id: ObservableId) -> Result<f64, LocalTimeError> {
        self.running
            .get(id.0)
            .map(|r| r.total)
            .ok_or(LocalTimeError::UnregisteredObservable(id.0))
    }

    /// `G_n(f)` recomputed from the histogram; works for any `f`.
    pub fn replay_g(&self, f: &ObservableF) -> f64 {
        self.histogram.functional(f)
    }

    pub fn functional_l(&self, alpha: f64) -> Result<f64, LocalTimeError> {
        self.histogram.functional_l(alpha)
    }

    pub fn checkpoint(&self, alphas: &[f64], with_histogram: bool) -> Result<Checkpoint, LocalTimeError> {
        let l = alphas.iter().map(|&a| self.functional_l(a)).collect::<Result<_, _>>()?;
        Ok(Checkpoint {
            n: self.n,
            range: self.range(),
            l_max: self.l_max,
            g: self.running.iter().map(|r| r.total).collect(),
            l,
            histogram: with_histogram.then(|| self.histogram.clone()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn walk(path: &[i64], observables: Vec<ObservableF>) -> LocalTimeState {
        let mut s = LocalTimeState::new(1, observables);
        let mut prev = 0;
        for &x in path {
            s.ingest_offset(&[x - prev]);
            prev = x;
        }
        s
    }

    #[test]
    fn fresh_state_counts_origin() {
        let s = LocalTimeState::new(2, []);
        assert_eq!(s.n(), 0);
        assert_eq!(s.range(), 1);
        assert_eq!(s.l_max(), 1);
        assert_eq!(s.histogram().get(1), 1);
        assert_eq!(s.local_time(&Site(vec![0, 0])), 1);
    }

    #[test]
    fn out_and_back() {
        let s = walk(&[1, 0], vec![ObservableF::power(0.0).unwrap(), ObservableF::exactly([2])]);
        assert_eq!(s.local_time(&Site(vec![0])), 2);
        assert_eq!(s.local_time(&Site(vec![1])), 1);
        assert_eq!(s.histogram(), &Histogram::from_counts([(1, 1), (2, 1)]));
        assert_eq!(s.range(), 2);
        assert_eq!(s.l_max(), 2);
        assert_eq!(s.functional_l(2.0).unwrap(), 5.0);
        assert_eq!(s.functional_l(0.0).unwrap(), 2.0);
        assert!((s.functional_l(0.5).unwrap() - (2f64.sqrt() + 1.0)).abs() < 1e-15);
        assert_eq!(s.functional_g(ObservableId(0)).unwrap(), 2.0);
        assert_eq!(s.functional_g(ObservableId(1)).unwrap(), 1.0);
        assert!(matches!(
            s.functional_g(ObservableId(2)),
            Err(LocalTimeError::UnregisteredObservable(2))
        ));
        assert!(matches!(s.functional_l(-1.0), Err(LocalTimeError::NegativeAlpha(_))));
    }

    #[test]
    fn straight_line_visits_each_site_once() {
        let f = ObservableF::Table { values: vec![3.5, 100.0], tail: TailRule::Zero };
        let s = walk(&[1, 2, 3, 4, 5], vec![f]);
        assert_eq!(s.histogram(), &Histogram::from_counts([(1, 6)]));
        assert_eq!(s.range(), 6);
        assert_eq!(s.functional_g(ObservableId(0)).unwrap(), 6.0 * 3.5);
    }

    #[test]
    fn conservation_on_backtrack() {
        let s = walk(&[1, 2, 1], vec![]);
        assert_eq!(s.histogram(), &Histogram::from_counts([(1, 2), (2, 1)]));
        assert_eq!(s.histogram().total_visits(), 4);
    }

    #[test]
    fn packing_round_trip_and_widening() {
        for c in [[0, 0, 0], [-5, 7, 1_000_000], [-(PACK_LIMIT - 1), PACK_LIMIT - 1, 3]] {
            assert_eq!(unpack(pack(&c).unwrap(), 3), c.to_vec());
        }
        assert!(pack(&[PACK_LIMIT]).is_none());

        let mut s = LocalTimeState::new(1, []);
        s.ingest_offset(&[PACK_LIMIT - 1]);
        s.ingest_offset(&[1]);
        s.ingest_offset(&[-1]);
        assert_eq!(s.range(), 3);
        assert_eq!(s.local_time(&Site(vec![PACK_LIMIT - 1])), 2);
        assert_eq!(s.local_time(&Site(vec![0])), 1);
        assert_eq!(s.histogram().total_visits(), 4);
    }

    #[test]
    fn wide_keys_in_high_dimension() {
        let mut s = LocalTimeState::new(4, [ObservableF::power(2.0).unwrap()]);
        s.ingest_offset(&[1, 0, 0, 0]);
        s.ingest_offset(&[-1, 0, 0, 0]);
        assert_eq!(s.range(), 2);
        assert_eq!(s.functional_g(ObservableId(0)).unwrap(), 5.0);
    }

    use super::super::TailRule;
}
