//! Deviation detection as associative-array algebra.
//!
//! With `V` the observed values as a `(point, "value")` column and `L` the
//! baseline limits in the same shape:
//!
//! * MAX violations are `compareScalar(S_max·V − L_max, GT, 0)`,
//! * MIN violations are `compareScalar(L_min − S_min·V, GT, 0)`,
//! * BINARY violations are `compareScalar(S_bin·V − E, NE, 0)`,
//!
//! where each `S` is the diagonal selector of that kind's points. The union
//! `X` of violating points, multiplied as `Xᵀ·P` with the point-to-`zone|cue`
//! indicator `P`, yields the violation count per (zone, cue).
//!
//! Points absent from the frame read as 0, the sparse-array convention.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{Alert, Baseline, BaselineEntry, CueClass, Kind, Severity};
use crate::assoc::{AssocArray, CmpOp, Collision, Triple};
use crate::ingest::parse_record_key;

const VALUE: &str = "value";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Detection {
    /// One per violating point, ordered by point id.
    pub alerts: Vec<Alert>,
    pub cue_counts: BTreeMap<(String, CueClass), u32>,
}

/// Folds a frame keyed by record key into `(pointId, "value")` and returns
/// it with the frame's latest timestamp.
pub fn point_values(frame: &AssocArray) -> (AssocArray, u64) {
    let mut ts = 0;
    let triples: Vec<Triple> = frame
        .iter()
        .filter(|(_, c, _)| *c == VALUE)
        .map(|(r, _, v)| match parse_record_key(r) {
            Some((t, _, id)) => {
                ts = ts.max(t);
                Triple::new(id, VALUE, v)
            }
            None => Triple::new(r, VALUE, v),
        })
        .collect();
    let v =
        AssocArray::from_triples(triples, Collision::Last).expect("keys come from a valid array");
    (v, ts)
}

fn column(entries: &[&BaselineEntry], value: impl Fn(&BaselineEntry) -> f64) -> AssocArray {
    AssocArray::from_triples(
        entries
            .iter()
            .map(|e| Triple::new(e.point_id.as_str(), VALUE, value(e))),
        Collision::Last,
    )
    .expect("baseline ids are valid keys")
}

fn selector(entries: &[&BaselineEntry]) -> AssocArray {
    AssocArray::identity(entries.iter().map(|e| e.point_id.as_str()))
}

fn cue_key(e: &BaselineEntry) -> String {
    format!("{}|{}", e.zone, e.cue_class)
}

/// Alerts and per-(zone, cue) counts for one frame.
pub fn detect(frame: &AssocArray, baseline: &Baseline) -> Detection {
    let (v, ts) = point_values(frame);
    let of_kind = |k: Kind| -> Vec<&BaselineEntry> {
        baseline.entries().iter().filter(|e| e.kind == k).collect()
    };
    let (max, min, bin) = (
        of_kind(Kind::Max),
        of_kind(Kind::Min),
        of_kind(Kind::Binary),
    );

    let over = selector(&max)
        .multiply(&v)
        .sub(&column(&max, |e| e.limit))
        .compare_scalar(CmpOp::Gt, 0.0);
    let under = column(&min, |e| e.limit)
        .sub(&selector(&min).multiply(&v))
        .compare_scalar(CmpOp::Gt, 0.0);
    let flipped = selector(&bin)
        .multiply(&v)
        .sub(&column(&bin, |e| e.limit))
        .compare_scalar(CmpOp::Ne, 0.0);
    let violations = over
        .indicator()
        .add(&under.indicator())
        .add(&flipped.indicator())
        .indicator();

    let cue_of = AssocArray::from_triples(
        baseline
            .entries()
            .iter()
            .map(|e| Triple::new(e.point_id.as_str(), cue_key(e), 1.0)),
        Collision::Last,
    )
    .expect("baseline ids are valid keys");
    let counts = violations.transpose().multiply(&cue_of);

    let by_id: HashMap<&str, &BaselineEntry> = baseline
        .entries()
        .iter()
        .map(|e| (e.point_id.as_str(), e))
        .collect();
    let alerts = violations
        .row_keys()
        .map(|p| Alert::from_entry(by_id[p], v.value(p, VALUE), ts))
        .collect();
    let mut cue_counts = BTreeMap::new();
    for (_, key, n) in counts.iter() {
        let (zone, cue) = key.rsplit_once('|').expect("built as zone|cue");
        cue_counts.insert(
            (zone.to_owned(), cue.parse().expect("built from a CueClass")),
            n as u32,
        );
    }
    Detection { alerts, cue_counts }
}

pub fn detect_deviations(frame: &AssocArray, baseline: &Baseline) -> Vec<Alert> {
    detect(frame, baseline).alerts
}

/// Presence alerts for inventory hosts with no record in this cycle.
pub fn missing_assets<'a>(
    baseline: &Baseline,
    present: impl IntoIterator<Item = &'a str>,
    timestamp: u64,
) -> Vec<Alert> {
    let present: BTreeSet<&str> = present.into_iter().collect();
    baseline
        .hosts()
        .iter()
        .filter(|h| !present.contains(h.hostname.as_str()))
        .map(|h| Alert {
            point_id: h.hostname.clone(),
            kind: Kind::Binary,
            observed: 0.0,
            limit: 1.0,
            severity: Severity::Warning,
            cue_class: CueClass::NodeHealth,
            timestamp,
            zone: h.rack.clone(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Transition {
    Raised(Alert),
    Cleared {
        point_id: String,
        observed: f64,
        timestamp: u64,
    },
}

/// Tracks raised alerts across cycles. An alert is raised as soon as its
/// point violates; it clears only once the value is back inside the limit
/// by at least `margin` (a fraction of the limit magnitude).
#[derive(Debug, Clone)]
pub struct AlertTracker {
    margin: f64,
    active: BTreeMap<String, Alert>,
}

impl Default for AlertTracker {
    fn default() -> Self {
        Self::new(0.02)
    }
}

impl AlertTracker {
    pub fn new(margin: f64) -> Self {
        Self {
            margin,
            active: BTreeMap::new(),
        }
    }

    pub fn active(&self) -> impl Iterator<Item = &Alert> {
        self.active.values()
    }

    fn cleared(&self, a: &Alert, observed: f64) -> bool {
        let m = self.margin * a.limit.abs();
        match a.kind {
            Kind::Max => observed <= a.limit - m,
            Kind::Min => observed >= a.limit + m,
            Kind::Binary => observed == a.limit,
        }
    }

    /// `values` maps point ids to current observations (absent reads as 0).
    pub fn update(
        &mut self,
        alerts: &[Alert],
        values: &AssocArray,
        timestamp: u64,
    ) -> Vec<Transition> {
        let mut out = Vec::new();
        let firing: BTreeSet<&str> = alerts.iter().map(|a| a.point_id.as_str()).collect();
        for a in alerts {
            if !self.active.contains_key(&a.point_id) {
                self.active.insert(a.point_id.clone(), a.clone());
                out.push(Transition::Raised(a.clone()));
            }
        }
        let candidates: Vec<String> = self
            .active
            .keys()
            .filter(|p| !firing.contains(p.as_str()))
            .cloned()
            .collect();
        for p in candidates {
            let observed = values.value(&p, VALUE);
            if self.cleared(&self.active[&p], observed) {
                self.active.remove(&p);
                out.push(Transition::Cleared {
                    point_id: p,
                    observed,
                    timestamp,
                });
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::{BaselineEntry, NodeSettings};

    fn frame(values: &[(&str, f64)]) -> AssocArray {
        AssocArray::from_triples(
            values
                .iter()
                .map(|(p, v)| Triple::new(format!("0000000100|ecopod|{p}"), VALUE, *v)),
            Collision::Last,
        )
        .unwrap()
    }

    fn baseline() -> Baseline {
        Baseline::new(
            vec![
                BaselineEntry::new(
                    "t",
                    Kind::Max,
                    30.0,
                    Severity::Warning,
                    CueClass::Temperature,
                    "z1",
                ),
                BaselineEntry::new(
                    "p",
                    Kind::Min,
                    5.0,
                    Severity::Warning,
                    CueClass::Economizer,
                    "z1",
                ),
                BaselineEntry::new(
                    "fire",
                    Kind::Binary,
                    0.0,
                    Severity::Critical,
                    CueClass::Fire,
                    "pod",
                ),
            ],
            vec![],
            NodeSettings::default(),
        )
        .unwrap()
    }

    #[test]
    fn inside_limits_is_quiet() {
        let d = detect(&frame(&[("t", 22.0), ("p", 12.0)]), &baseline());
        assert!(d.alerts.is_empty());
        assert!(d.cue_counts.is_empty());
    }

    #[test]
    fn fire_bit_raises_one_critical() {
        let d = detect(
            &frame(&[("t", 22.0), ("p", 12.0), ("fire", 1.0)]),
            &baseline(),
        );
        assert_eq!(d.alerts.len(), 1);
        let a = &d.alerts[0];
        assert_eq!(
            (a.cue_class, a.severity, a.timestamp),
            (CueClass::Fire, Severity::Critical, 100)
        );
        assert_eq!(d.cue_counts[&("pod".to_owned(), CueClass::Fire)], 1);
    }

    #[test]
    fn absent_point_reads_as_zero() {
        // pressure missing -> 0 < 5 is a MIN violation
        let d = detect(&frame(&[("t", 31.0)]), &baseline());
        let ids: Vec<&str> = d.alerts.iter().map(|a| a.point_id.as_str()).collect();
        assert_eq!(ids, ["p", "t"]);
        assert_eq!(d.cue_counts.len(), 2);
        assert!(d.alerts.iter().all(Alert::is_valid));
    }

    #[test]
    fn tracker_hysteresis() {
        let b = baseline();
        let mut tr = AlertTracker::default();
        let step = |tr: &mut AlertTracker, t: f64| {
            let f = frame(&[("t", t), ("p", 12.0)]);
            let alerts = detect_deviations(&f, &b);
            tr.update(&alerts, &point_values(&f).0, 0)
        };
        assert!(matches!(step(&mut tr, 31.0)[..], [Transition::Raised(_)]));
        // back under the limit but within 2% of it: still active
        assert!(step(&mut tr, 29.9).is_empty());
        assert_eq!(tr.active().count(), 1);
        assert!(matches!(
            step(&mut tr, 29.4)[..],
            [Transition::Cleared { .. }]
        ));
        assert!(matches!(step(&mut tr, 30.5)[..], [Transition::Raised(_)]));
    }
}
