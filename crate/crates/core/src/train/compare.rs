use std::fmt::Write;

use super::metrics::{evaluate, format_metrics_rows, MetricsRecord};
use crate::bayes::{corner_erosion_probe, refine_iterate, BayesConfig};
use crate::error::Result;
use crate::net::{refine_mask, RefinerParams};
use crate::synth::{
    canonical_detail_mask, render_source, DetailCounts, DetailSample, RenderParams, Sample,
};

/// Seed of the source frame rendered for the network's detail probe.
pub const PROBE_SOURCE_SEED: u64 = 0;

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionRow {
    pub name: &'static str,
    pub per_sample: Vec<MetricsRecord>,
    pub mean: MetricsRecord,
}

impl ConditionRow {
    fn new(name: &'static str, per_sample: Vec<MetricsRecord>) -> Self {
        let mean = MetricsRecord::mean(&per_sample);
        Self {
            name,
            per_sample,
            mean,
        }
    }
}

/// Raw, Bayesian-refined and network-refined masks scored against ground
/// truth, plus what each refiner did to the canonical detail mask.
#[derive(Clone, Debug, PartialEq)]
pub struct CompareReport {
    pub raw: ConditionRow,
    pub bayes: ConditionRow,
    pub network: ConditionRow,
    pub probe_bayes: DetailCounts,
    pub probe_network: DetailCounts,
}

impl CompareReport {
    pub fn conditions(&self) -> [&ConditionRow; 3] {
        [&self.raw, &self.bayes, &self.network]
    }

    /// Three condition rows of mean metrics followed by two probe rows.
    pub fn render(&self, csv: bool) -> String {
        let rows: Vec<(String, MetricsRecord)> = self
            .conditions()
            .iter()
            .map(|c| (c.name.to_string(), c.mean))
            .collect();
        let mut out = format_metrics_rows("condition", &rows, csv);
        if csv {
            out.push_str("probe,survived,removed,total\n");
        }
        for (name, p) in [
            ("probe_bayes", &self.probe_bayes),
            ("probe_network", &self.probe_network),
        ] {
            if csv {
                let _ = writeln!(out, "{name},{},{},{}", p.survived(), p.removed(), p.total());
            } else {
                let _ = writeln!(
                    out,
                    "{name} survived {} removed {} total {}",
                    p.survived(),
                    p.removed(),
                    p.total()
                );
            }
        }
        out
    }
}

pub fn compare(
    dataset: &[Sample],
    params: &RefinerParams,
    bayes: &BayesConfig,
    tau: f32,
) -> Result<CompareReport> {
    let mut raw = Vec::with_capacity(dataset.len());
    let mut by = Vec::with_capacity(dataset.len());
    let mut net = Vec::with_capacity(dataset.len());
    for s in dataset {
        raw.push(evaluate(&s.mask_noisy, &s.mask_gt)?);
        by.push(evaluate(
            &refine_iterate(&s.mask_noisy, bayes)?,
            &s.mask_gt,
        )?);
        net.push(evaluate(
            &refine_mask(params, &s.mask_noisy, &s.source, tau)?,
            &s.mask_gt,
        )?);
    }

    let probe_bayes = corner_erosion_probe(bayes)?.counts;
    let detail = canonical_detail_mask();
    let source = render_source(&detail.mask, PROBE_SOURCE_SEED, &RenderParams::default())?;
    let probe_network = detail.survival(&refine_mask(params, &detail.mask, &source, tau)?)?;

    Ok(CompareReport {
        raw: ConditionRow::new("raw", raw),
        bayes: ConditionRow::new("bayes", by),
        network: ConditionRow::new("network", net),
        probe_bayes,
        probe_network,
    })
}

/// Detail survival summed over detail-bearing samples, for the Bayesian
/// refiner and the network respectively.
pub fn detail_survival(
    samples: &[DetailSample],
    params: &RefinerParams,
    bayes: &BayesConfig,
    tau: f32,
) -> Result<(DetailCounts, DetailCounts)> {
    let mut b = DetailCounts::default();
    let mut n = DetailCounts::default();
    for d in samples {
        let s = &d.sample;
        b.accumulate(&d.detail.survival(&refine_iterate(&s.mask_noisy, bayes)?)?);
        n.accumulate(
            &d.detail
                .survival(&refine_mask(params, &s.mask_noisy, &s.source, tau)?)?,
        );
    }
    Ok((b, n))
}
