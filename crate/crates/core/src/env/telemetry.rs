use super::DuReport;

pub fn telemetry_header() -> &'static str {
    "epoch,du_id,mu_r_bps,d_s_bps,l_d_s,ue_id,slice,rate_bps"
}

/// One CSV row per UE: the DU's QoS vector repeated next to each UE's rate.
pub fn telemetry_rows(epoch: u64, reports: &[DuReport]) -> Vec<String> {
    let mut rows = Vec::new();
    for r in reports {
        for (u, (rate, slice)) in r.ue_rates.iter().zip(&r.ue_slices).enumerate() {
            rows.push(format!(
                "{},{},{},{},{},{},{},{}",
                epoch,
                r.du_id,
                r.q[0],
                r.q[1],
                r.q[2],
                u,
                slice.name(),
                rate
            ));
        }
    }
    rows
}
