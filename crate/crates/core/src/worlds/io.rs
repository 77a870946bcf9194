//! Dataset CSV (`domain_id,y,x0,...`) and the JSON world sidecar.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::objective::DomainDataset;

use super::synthetic::WorldSpec;

/// Writes all datasets to one CSV. Values use Rust's shortest round-trip
/// formatting, so reading back is bit-exact.
pub fn write_datasets_csv<W: Write>(datasets: &[DomainDataset], out: W) -> Result<()> {
    let d = datasets.first().map_or(0, |ds| ds.xs.cols());
    if let Some(bad) = datasets.iter().find(|ds| ds.xs.cols() != d) {
        return Err(Error::shape("dataset csv width", d, bad.xs.cols()));
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["domain_id".to_string(), "y".to_string()];
    header.extend((0..d).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(d + 2);
    for ds in datasets {
        for (row, y) in ds.xs.iter_rows().zip(&ds.ys) {
            record.clear();
            record.push(ds.domain_id.to_string());
            record.push(y.to_string());
            record.extend(row.iter().map(f64::to_string));
            w.write_record(&record)?;
        }
    }
    w.flush().map_err(|e| Error::io("<dataset csv>", e))?;
    Ok(())
}

/// Reads datasets back, grouped by domain id in ascending order.
pub fn read_datasets_csv<R: Read>(input: R) -> Result<Vec<DomainDataset>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.len() < 3 || &header[0] != "domain_id" || &header[1] != "y" {
        return Err(Error::Data(
            "dataset csv must start with domain_id,y,x0".into(),
        ));
    }
    for (j, name) in header.iter().skip(2).enumerate() {
        if name != format!("x{j}") {
            return Err(Error::Data(format!(
                "unexpected column {name:?}, wanted x{j}"
            )));
        }
    }
    let d = header.len() - 2;
    let mut groups: BTreeMap<usize, (Vec<f64>, Vec<u8>)> = BTreeMap::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| -> &str { rec.get(i).unwrap_or("") };
        let parse_err = |what: &str| Error::Data(format!("row {}: bad {what}", line + 2));
        let id: usize = field(0).parse().map_err(|_| parse_err("domain_id"))?;
        let y: u8 = field(1).parse().map_err(|_| parse_err("y"))?;
        let entry = groups.entry(id).or_default();
        for j in 0..d {
            let v: f64 = field(j + 2)
                .parse()
                .map_err(|_| parse_err(&format!("x{j}")))?;
            entry.0.push(v);
        }
        entry.1.push(y);
    }
    groups
        .into_iter()
        .map(|(id, (xs, ys))| DomainDataset::new(id, Matrix::new(ys.len(), d, xs)?, ys))
        .collect()
}

pub fn world_to_json(world: &WorldSpec) -> Result<String> {
    Ok(serde_json::to_string_pretty(world)?)
}

pub fn world_from_json(text: &str) -> Result<WorldSpec> {
    let world: WorldSpec = serde_json::from_str(text)?;
    world.validate()?;
    Ok(world)
}
