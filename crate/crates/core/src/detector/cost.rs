use serde::Serialize;

use crate::blocks::Cost;

use super::graph::{attention_macs, mlp_macs, ConvLayerSpec, Graph, HeadSpec};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BlockCost {
    pub name: String,
    pub params: u64,
    pub macs: u64,
}

/// Per-block and total parameter / MAC counts at one input size.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CostReport {
    pub input_size: usize,
    pub blocks: Vec<BlockCost>,
    pub total_params: u64,
    pub total_macs: u64,
}

impl CostReport {
    fn push(&mut self, name: &str, cost: Cost) {
        self.total_params += cost.params;
        self.total_macs += cost.macs;
        self.blocks.push(BlockCost {
            name: name.to_string(),
            params: cost.params,
            macs: cost.macs,
        });
    }

    pub fn block(&self, name: &str) -> Option<&BlockCost> {
        self.blocks.iter().find(|b| b.name == name)
    }
}

/// Parameter counts at the configured input size.
pub fn count_params(graph: &Graph) -> CostReport {
    count_macs(graph, graph.config.input_size)
}

pub fn count_macs(graph: &Graph, input_size: usize) -> CostReport {
    let mut r = CostReport {
        input_size,
        blocks: Vec::new(),
        total_params: 0,
        total_macs: 0,
    };
    let (c, mut h, mut w) = graph.stem.cost(input_size, input_size);
    r.push(&graph.stem.name, c);

    let mut sizes = Vec::new();
    for s in &graph.stages {
        let (c, ho, wo) = s.down.cost(h, w);
        r.push(s.down.name(), c);
        (h, w) = (ho, wo);
        r.push(s.tail.name(), s.tail.cost(h, w));
        sizes.push((h, w));
    }
    r.push(&graph.sppf.name, graph.sppf.cost(h, w));

    let [_, s3, s4, s5] = [sizes[0], sizes[1], sizes[2], sizes[3]];
    let nk = &graph.neck;
    r.push(&nk.fpn4.name, nk.fpn4.cost(s4.0, s4.1));
    r.push(&nk.fpn3.name, nk.fpn3.cost(s3.0, s3.1));
    let down = |r: &mut CostReport, l: &ConvLayerSpec, (h, w): (usize, usize)| {
        r.push(l.name(), l.cost(h, w).0);
    };
    down(&mut r, &nk.pan4_down, s3);
    r.push(&nk.pan4.name, nk.pan4.cost(s4.0, s4.1));
    down(&mut r, &nk.pan5_down, s4);
    r.push(&nk.pan5.name, nk.pan5.cost(s5.0, s5.1));

    let levels = [s3, s4, s5];
    match &graph.head {
        HeadSpec::Anchor(heads) => {
            for (hd, &(h, w)) in heads.iter().zip(&levels) {
                r.push(&hd.conv1.name, hd.conv1.cost(h, w).0);
                r.push(&hd.conv2.name, hd.conv2.cost(h, w).0);
                let weights = (hd.pred.c_out * hd.pred.c_in) as u64;
                r.push(
                    &hd.pred.name,
                    Cost {
                        params: weights + hd.pred.c_out as u64,
                        macs: weights * (h * w) as u64,
                    },
                );
            }
        }
        HeadSpec::SetPrediction(sh) => {
            let d = sh.cfg.d_model;
            let hid = sh.cfg.mlp_hidden;
            let q = sh.num_queries;
            let mut memory = 0;
            for (i, (&cin, &(h, w))) in sh.in_channels.iter().zip(&levels).enumerate() {
                let tokens = h * w;
                memory += tokens;
                r.push(
                    &format!("{}.proj{}", sh.name, i + 3),
                    Cost {
                        params: (cin * d + d) as u64,
                        macs: (tokens * cin * d) as u64,
                    },
                );
            }
            r.push(
                &format!("{}.queries", sh.name),
                Cost {
                    params: (q * d) as u64,
                    macs: 0,
                },
            );
            for l in &sh.layers {
                let attn_params = 4 * (d * d) as u64;
                let mlp_params = (d * hid + hid + hid * d + d) as u64;
                r.push(
                    &l.name,
                    Cost {
                        params: 2 * attn_params + mlp_params,
                        macs: attention_macs(q, q, d)
                            + attention_macs(q, memory, d)
                            + mlp_macs(q, d, hid),
                    },
                );
            }
            for (name, out) in [("class", sh.num_classes), ("box", 4)] {
                r.push(
                    &format!("{}.{name}", sh.name),
                    Cost {
                        params: (d * out + out) as u64,
                        macs: (q * d * out) as u64,
                    },
                );
            }
        }
    }
    r
}
