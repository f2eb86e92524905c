use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::Result;

/// One line of the metrics history. Loss columns other than `base_loss` are
/// training-objective averages and stay empty for evaluation-only domains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub domain: String,
    pub split: String,
    pub accuracy: f64,
    pub base_loss: f64,
    pub psw_loss: Option<f64>,
    pub ps_loss: Option<f64>,
    pub total_loss: Option<f64>,
}

pub fn write_metrics_csv<W: Write>(w: W, rows: &[MetricsRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_metrics_csv<R: Read>(r: R) -> Result<Vec<MetricsRow>> {
    Ok(csv::Reader::from_reader(r).deserialize().collect::<std::result::Result<_, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let rows = vec![
            MetricsRow {
                epoch: 1,
                domain: "+90%".into(),
                split: "train".into(),
                accuracy: 0.75,
                base_loss: 0.5,
                psw_loss: Some(0.7),
                ps_loss: Some(0.6),
                total_loss: Some(0.63),
            },
            MetricsRow {
                epoch: 1,
                domain: "-90%".into(),
                split: "test".into(),
                accuracy: 0.25,
                base_loss: 1.5,
                psw_loss: None,
                ps_loss: None,
                total_loss: None,
            },
        ];
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("epoch,domain,split,accuracy,base_loss,psw_loss,ps_loss,total_loss\n"));
        assert!(text.contains("1,-90%,test,0.25,1.5,,,\n"));
        assert_eq!(read_metrics_csv(&buf[..]).unwrap(), rows);
    }
}
