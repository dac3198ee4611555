//! Run-length encoded label maps: one list of `[label, run]` pairs per row.

use serde::{Deserialize, Serialize};

use hhseg_core::{LabelId, Labeling};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleLabelMap {
    pub width: usize,
    pub height: usize,
    pub rows: Vec<Vec<[u32; 2]>>,
}

impl RleLabelMap {
    /// Encodes a 2D labeling.
    pub fn encode(labeling: &Labeling) -> Self {
        let dims = labeling.grid().dims();
        let (height, width) = (dims[0], dims[1]);
        let rows = labeling
            .assignment()
            .chunks(width)
            .map(|row| {
                let mut runs: Vec<[u32; 2]> = Vec::new();
                for &LabelId(l) in row {
                    match runs.last_mut() {
                        Some([label, n]) if *label == l as u32 => *n += 1,
                        _ => runs.push([l as u32, 1]),
                    }
                }
                runs
            })
            .collect();
        RleLabelMap { width, height, rows }
    }

    /// Row-major label ids; `None` if the runs do not tile the map.
    pub fn decode(&self) -> Option<Vec<LabelId>> {
        if self.rows.len() != self.height {
            return None;
        }
        let mut out = Vec::with_capacity(self.width * self.height);
        for row in &self.rows {
            let start = out.len();
            for &[label, n] in row {
                let label = u8::try_from(label).ok()?;
                out.extend(std::iter::repeat_n(LabelId(label), n as usize));
            }
            if out.len() - start != self.width {
                return None;
            }
        }
        Some(out)
    }
}
