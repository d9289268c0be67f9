//! Unit interaction factor screening.
//!
//! `UIF = (S_hvdc / S_gen) · (1 − S_sc,−i / S_sc)²`, with both short-circuit levels taken at the
//! converter bus and `S_sc,−i` computed with the generator disconnected.

use nalgebra::DMatrix;
use num_complex::Complex64;
use std::collections::{HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::scenario::Scenario;

/// Empirical threshold established for line-commutated converters.
pub const LCC_THRESHOLD: f64 = 0.1;

pub const VSC_CAVEAT: &str = "The 0.1 threshold was established for line-commutated converters; \
for a VSC link it may be inappropriate, so a high value calls for a detailed study rather than \
proving a problem, and a low value is not a guarantee.";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UifInputs {
    pub s_hvdc: f64,
    pub s_gen: f64,
    pub s_sc: f64,
    pub s_sc_minus_i: f64,
    pub threshold: f64,
}

impl UifInputs {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.s_hvdc, self.s_gen, self.s_sc, self.s_sc_minus_i]
            .iter()
            .all(|&x| x > 0.0 && x.is_finite());
        if !pos {
            return Err(Error::InvalidModel(
                "UIF inputs must be positive, finite MVA values".into(),
            ));
        }
        // a hair of slack for round-off in the two network reductions
        if self.s_sc_minus_i > self.s_sc * (1.0 + 1e-12) {
            return Err(Error::InvalidModel(format!(
                "short-circuit power without the unit ({:.3} MVA) exceeds the level with it ({:.3} MVA)",
                self.s_sc_minus_i, self.s_sc
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UifResult {
    pub value: f64,
    pub high_risk: bool,
}

pub fn uif(inp: &UifInputs) -> Result<UifResult> {
    inp.validate()?;
    let share = (1.0 - inp.s_sc_minus_i / inp.s_sc).max(0.0);
    let value = inp.s_hvdc / inp.s_gen * share * share;
    Ok(UifResult {
        value,
        high_risk: value > inp.threshold,
    })
}

/// Three-phase short-circuit power (MVA) at `bus`, pre-fault voltage 1 pu.
///
/// Series elements (lines, transformers, the blocking filter at base frequency) are reduced to
/// the Thevenin impedance seen from `bus`; the grid contributes through its equivalent impedance
/// and the machine, unless excluded, through `Ra + jX''d`. Shunt capacitance and the converter
/// (current controlled) are ignored.
pub fn short_circuit_power(scn: &Scenario, bus: &str, exclude_generator: bool) -> Result<f64> {
    let net = &scn.network;
    let base = net.base_mva;
    let mut idx: HashMap<&str, usize> = HashMap::new();
    for (i, b) in net.buses.iter().enumerate() {
        idx.insert(b.name.as_str(), i);
    }
    let look = |name: &str| {
        idx.get(name)
            .copied()
            .ok_or_else(|| Error::Topology(format!("unknown bus `{name}`")))
    };
    let target = look(bus)?;
    let mut n = net.buses.len();
    let mut series: Vec<(usize, usize, Complex64)> = Vec::new();
    for l in &net.lines {
        let (a, b) = (look(&l.from)?, look(&l.to)?);
        let zb = net.buses[a].kv.powi(2) / base;
        let z = Complex64::new(l.r_ohm_per_km, l.x_ohm_per_km) * l.length_km / zb;
        series.push((a, b, z));
    }
    for t in &net.transformers {
        let (a, b) = (look(&t.from)?, look(&t.to)?);
        series.push((a, b, Complex64::new(t.r_pu, t.x_pu) * (base / t.rated_mva)));
    }
    let gen_bus = look(&scn.generator.bus)?;
    let zk = base / scn.machine.rated_mva;
    let mut machine_node = gen_bus;
    if let Some(f) = &scn.filter {
        machine_node = n;
        n += 1;
        series.push((
            machine_node,
            gen_bus,
            f.response(scn.meta.base_frequency) * zk,
        ));
    }
    let mut sources: Vec<(usize, Complex64)> = Vec::new();
    let (rg, xg) = net.grid.impedance(net.grid.ssc_mva, base);
    sources.push((look(&net.grid.bus)?, Complex64::new(rg, xg)));
    if !exclude_generator {
        let m = &scn.machine;
        sources.push((machine_node, Complex64::new(m.ra, m.xd_subtransient) * zk));
    }

    // every part of the network carrying the target must reach a source
    let mut adj = vec![Vec::new(); n];
    for &(a, b, _) in &series {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([target]);
    seen[target] = true;
    while let Some(k) = queue.pop_front() {
        for &j in &adj[k] {
            if !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    if !sources.iter().any(|&(k, _)| seen[k]) {
        return Err(Error::Topology(format!(
            "bus `{bus}` has no path to any short-circuit source{}",
            if exclude_generator {
                " once the generator is disconnected"
            } else {
                ""
            }
        )));
    }

    // reduce only the component containing the target
    let keep: Vec<usize> = (0..n).filter(|&k| seen[k]).collect();
    let pos: HashMap<usize, usize> = keep.iter().enumerate().map(|(i, &k)| (k, i)).collect();
    let m = keep.len();
    let mut y = DMatrix::<Complex64>::zeros(m, m);
    for &(a, b, z) in &series {
        if let (Some(&i), Some(&j)) = (pos.get(&a), pos.get(&b)) {
            let g = z.inv();
            y[(i, i)] += g;
            y[(j, j)] += g;
            y[(i, j)] -= g;
            y[(j, i)] -= g;
        }
    }
    for &(k, z) in &sources {
        if let Some(&i) = pos.get(&k) {
            y[(i, i)] += z.inv();
        }
    }
    let t = pos[&target];
    let mut e = nalgebra::DVector::<Complex64>::zeros(m);
    e[t] = Complex64::new(1.0, 0.0);
    let z = y
        .lu()
        .solve(&e)
        .ok_or_else(|| Error::Topology("singular admittance matrix".into()))?;
    Ok(base / z[t].norm())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreeningReport {
    pub bus: String,
    pub inputs: UifInputs,
    pub result: UifResult,
}

impl ScreeningReport {
    pub fn render(&self) -> String {
        let i = &self.inputs;
        format!(
            "UIF screening at converter bus `{}`\n\
             \n  converter rating         S_hvdc   = {:10.1} MVA\
             \n  generator rating         S_gen    = {:10.1} MVA\
             \n  short-circuit power      S_sc     = {:10.1} MVA\
             \n  without the generator    S_sc,-i  = {:10.1} MVA\
             \n\n  UIF = {:.3}   threshold = {}   -> {}\n\n{}\n",
            self.bus,
            i.s_hvdc,
            i.s_gen,
            i.s_sc,
            i.s_sc_minus_i,
            self.result.value,
            i.threshold,
            if self.result.high_risk {
                "HIGH RISK: detailed torsional-interaction study required"
            } else {
                "low risk"
            },
            VSC_CAVEAT
        )
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let i = &self.inputs;
        writeln!(
            w,
            "bus,s_hvdc_mva,s_gen_mva,s_sc_mva,s_sc_minus_i_mva,threshold,uif,high_risk"
        )?;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            self.bus,
            crate::trace::fmt_num(i.s_hvdc),
            crate::trace::fmt_num(i.s_gen),
            crate::trace::fmt_num(i.s_sc),
            crate::trace::fmt_num(i.s_sc_minus_i),
            crate::trace::fmt_num(i.threshold),
            crate::trace::fmt_num(self.result.value),
            self.result.high_risk as u8
        )?;
        Ok(())
    }
}

/// UIF of the scenario's generator with respect to its converter.
pub fn screen(scn: &Scenario, threshold: f64) -> Result<ScreeningReport> {
    let h = scn
        .hvdc
        .as_ref()
        .ok_or_else(|| Error::Scenario("screening needs an [hvdc] section".into()))?;
    let inputs = UifInputs {
        s_hvdc: h.rated_mva,
        s_gen: scn.machine.rated_mva,
        s_sc: short_circuit_power(scn, &h.bus, false)?,
        s_sc_minus_i: short_circuit_power(scn, &h.bus, true)?,
        threshold,
    };
    Ok(ScreeningReport {
        bus: h.bus.clone(),
        result: uif(&inputs)?,
        inputs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn inputs(s_hvdc: f64, s_gen: f64, s_sc: f64, s_sc_minus_i: f64) -> UifInputs {
        UifInputs {
            s_hvdc,
            s_gen,
            s_sc,
            s_sc_minus_i,
            threshold: LCC_THRESHOLD,
        }
    }

    #[test]
    fn direct_evaluation() {
        let r = uif(&inputs(1000.0, 778.0, 2000.0, 1000.0)).unwrap();
        assert!((r.value - 0.3213).abs() < 1e-4);
        assert!(r.high_risk);
        let r = uif(&inputs(1000.0, 778.0, 2000.0, 2000.0)).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(!r.high_risk);
    }

    #[test]
    fn rejects_inconsistent_levels() {
        assert!(uif(&inputs(1000.0, 778.0, 1000.0, 2000.0)).is_err());
        assert!(uif(&inputs(0.0, 778.0, 2000.0, 1000.0)).is_err());
    }

    #[test]
    fn bundled_case() {
        let r = screen(&crate::scenario::aramon(), LCC_THRESHOLD).unwrap();
        assert!((r.result.value - 0.44).abs() < 0.01, "{r:?}");
    }

    proptest! {
        #[test]
        fn scale_free_and_monotone(
            s_hvdc in 10.0..5000.0f64,
            s_gen in 10.0..5000.0f64,
            s_sc in 100.0..20000.0f64,
            frac in 0.0..1.0f64,
            k in 0.01..100.0f64,
        ) {
            let s_mi = s_sc * frac.max(1e-6);
            let a = uif(&inputs(s_hvdc, s_gen, s_sc, s_mi)).unwrap().value;
            let b = uif(&inputs(k * s_hvdc, k * s_gen, k * s_sc, k * s_mi)).unwrap().value;
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
            let bigger = uif(&inputs(1.1 * s_hvdc, s_gen, s_sc, s_mi)).unwrap().value;
            prop_assert!(bigger >= a);
            let weaker = uif(&inputs(s_hvdc, s_gen, s_sc, s_mi * 0.9)).unwrap().value;
            prop_assert!(weaker >= a);
        }
    }
}
