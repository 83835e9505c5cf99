use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::rolling::PresentedWindow;
use crate::error::{Error, Result};
use crate::model::ModelKind;
use crate::postprocess::SimplifiedLoading;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoadingSide {
    Row,
    Col,
}

/// Loadings of one factor slot across windows: `values[i][w]` is entity `i`
/// in window `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub factor_slot: usize,
    pub entities: Vec<String>,
    pub windows: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

/// One heatmap per factor slot (1-based) from aligned windows.
pub fn heatmaps(windows: &[PresentedWindow], entities: &[String], side: LoadingSide) -> Result<Vec<Heatmap>> {
    if windows.is_empty() {
        return Ok(Vec::new());
    }
    let pick = |w: &PresentedWindow| match side {
        LoadingSide::Row => w.loadings_row.values().clone(),
        LoadingSide::Col => w.loadings_col.values().clone(),
    };
    let mats: Vec<DMatrix<f64>> = windows.iter().map(pick).collect();
    let (n, r) = mats[0].shape();
    if entities.len() != n {
        return Err(Error::LabelCount {
            what: "entity labels",
            found: entities.len(),
            expected: n,
        });
    }
    Ok((0..r)
        .map(|k| Heatmap {
            factor_slot: k + 1,
            entities: entities.to_vec(),
            windows: windows.iter().map(|w| w.label.clone()).collect(),
            values: (0..n).map(|i| mats.iter().map(|m| m[(i, k)]).collect()).collect(),
        })
        .collect())
}

impl Heatmap {
    /// Long CSV, `factor_slot,entity,window,value`, ten decimals.
    pub fn to_csv(maps: &[Heatmap]) -> String {
        let mut out = String::from("factor_slot,entity,window,value\n");
        for m in maps {
            for (i, e) in m.entities.iter().enumerate() {
                for (w, label) in m.windows.iter().enumerate() {
                    let _ = writeln!(out, "{},{e},{label},{:.10}", m.factor_slot, m.values[i][w]);
                }
            }
        }
        out
    }

    pub fn to_json(maps: &[Heatmap]) -> Result<String> {
        Ok(serde_json::to_string_pretty(maps)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Dimension,
    Entity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: String,
    pub kind: NodeKind,
    /// Trade volume within the dimension (symmetric model) or total flow
    /// through it (asymmetric model); zero for entities.
    pub volume: f64,
    /// Display size in `[0.3, 1.5]`, scaled to the largest volume.
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub from: String,
    pub to: String,
    /// Mean factor entry for dimension edges, simplified loading otherwise.
    pub width: f64,
    /// Line width in `[0.5, 8]`, scaled to the largest `|width|` of its kind.
    pub penwidth: f64,
    /// Keyed to the importing dimension.
    pub color: String,
    pub dotted: bool,
}

/// Latent trade network: dimension nodes, directed flows between them from
/// the mean factor matrix, and dotted entity-dimension links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkGraph {
    pub model: ModelKind,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
    pub scaling_note: String,
}

const PALETTE: [&str; 8] = [
    "red3", "royalblue3", "forestgreen", "darkorange2", "purple3", "gold3", "turquoise4", "deeppink3",
];

fn scale(v: f64, max: f64, lo: f64, hi: f64) -> f64 {
    if max > 0.0 {
        lo + (hi - lo) * v.abs() / max
    } else {
        lo
    }
}

impl NetworkGraph {
    /// Builds the graph from a presented window. For the symmetric model pass
    /// one simplified loading; for the asymmetric model pass the row (import)
    /// and column (export) simplified loadings.
    pub fn build(
        window: &PresentedWindow,
        model: ModelKind,
        entities: &[String],
        simplified_row: &SimplifiedLoading,
        simplified_col: Option<&SimplifiedLoading>,
    ) -> Result<Self> {
        let f = &window.factor_level;
        let (r1, r2) = f.shape();
        for s in std::iter::once(simplified_row).chain(simplified_col) {
            if s.values.nrows() != entities.len() {
                return Err(Error::LabelCount {
                    what: "entity labels",
                    found: entities.len(),
                    expected: s.values.nrows(),
                });
            }
        }
        let (import_ids, export_ids, volumes): (Vec<String>, Vec<String>, Vec<(String, f64)>) = match model {
            ModelKind::Symmetric => {
                let ids: Vec<_> = (1..=r1).map(|k| format!("F{k}")).collect();
                let vols = ids.iter().enumerate().map(|(k, id)| (id.clone(), f[(k, k)])).collect();
                (ids.clone(), ids, vols)
            }
            ModelKind::Asymmetric => {
                let im: Vec<_> = (1..=r1).map(|k| format!("Im{k}")).collect();
                let ex: Vec<_> = (1..=r2).map(|k| format!("Ex{k}")).collect();
                let mut vols: Vec<(String, f64)> = im.iter().enumerate().map(|(k, id)| (id.clone(), f.row(k).sum())).collect();
                vols.extend(ex.iter().enumerate().map(|(k, id)| (id.clone(), f.column(k).sum())));
                (im, ex, vols)
            }
        };
        let max_vol = volumes.iter().fold(0.0f64, |m, (_, v)| m.max(v.abs()));
        let mut nodes: Vec<GraphNode> = volumes
            .into_iter()
            .map(|(id, volume)| GraphNode {
                size: scale(volume, max_vol, 0.3, 1.5),
                id,
                kind: NodeKind::Dimension,
                volume,
            })
            .collect();
        nodes.extend(entities.iter().map(|e| GraphNode {
            id: e.clone(),
            kind: NodeKind::Entity,
            volume: 0.0,
            size: 0.3,
        }));

        let max_flow = f.amax();
        let mut edges = Vec::new();
        for i in 0..r1 {
            for j in 0..r2 {
                edges.push(GraphEdge {
                    from: export_ids[j].clone(),
                    to: import_ids[i].clone(),
                    width: f[(i, j)],
                    penwidth: scale(f[(i, j)], max_flow, 0.5, 8.0),
                    color: PALETTE[i % PALETTE.len()].to_string(),
                    dotted: false,
                });
            }
        }
        let sides: Vec<(&SimplifiedLoading, &[String])> = match (model, simplified_col) {
            (ModelKind::Asymmetric, Some(col)) => vec![(simplified_row, &import_ids), (col, &export_ids)],
            (ModelKind::Asymmetric, None) => {
                return Err(Error::InvalidArgument(
                    "asymmetric graph needs row and column simplified loadings".into(),
                ))
            }
            (ModelKind::Symmetric, _) => vec![(simplified_row, &import_ids)],
        };
        for (s, dims) in sides {
            if s.values.ncols() != dims.len() {
                return Err(Error::ColumnMismatch {
                    left: s.values.ncols(),
                    right: dims.len(),
                });
            }
            for (e, entity) in entities.iter().enumerate() {
                for (k, dim) in dims.iter().enumerate() {
                    let w = s.values[(e, k)];
                    if w > 0.0 {
                        edges.push(GraphEdge {
                            from: entity.clone(),
                            to: dim.clone(),
                            width: w,
                            penwidth: scale(w, 1.0, 0.5, 3.0),
                            color: "gray40".into(),
                            dotted: true,
                        });
                    }
                }
            }
        }
        let scaling_note = format!(
            "sizes and line widths are scaled to fit this plot only: node size 0.3-1.5 against max volume {max_vol:.6e}, \
             flow penwidth 0.5-8 against max |F| {max_flow:.6e}, entity penwidth 0.5-3 against weight 1"
        );
        Ok(Self {
            model,
            nodes,
            edges,
            scaling_note,
        })
    }

    pub fn dimension_nodes(&self) -> impl Iterator<Item = &GraphNode> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Dimension)
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph latent_network {\n");
        let _ = writeln!(out, "  // {}", self.scaling_note);
        for n in &self.nodes {
            match n.kind {
                NodeKind::Dimension => {
                    let _ = writeln!(
                        out,
                        "  \"{}\" [shape=circle, volume={:.6}, width={:.4}, fixedsize=true];",
                        n.id, n.volume, n.size
                    );
                }
                NodeKind::Entity => {
                    let _ = writeln!(out, "  \"{}\" [shape=box];", n.id);
                }
            }
        }
        for e in &self.edges {
            let style = if e.dotted { ", style=dotted, arrowhead=none" } else { "" };
            let _ = writeln!(
                out,
                "  \"{}\" -> \"{}\" [width={:.6}, penwidth={:.4}, color={}{style}];",
                e.from, e.to, e.width, e.penwidth, e.color
            );
        }
        out.push_str("}\n");
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LoadingMatrix, LoadingMode};
    use crate::postprocess::simplify_loadings;

    fn window(a: DMatrix<f64>, b: DMatrix<f64>, f: DMatrix<f64>) -> PresentedWindow {
        PresentedWindow {
            label: "1983".into(),
            loadings_row: LoadingMatrix::new(a, LoadingMode::ColumnSumOne).unwrap(),
            loadings_col: LoadingMatrix::new(b, LoadingMode::ColumnSumOne).unwrap(),
            factor_level: f,
            clipped_count: 0,
            clipped_mass: 0.0,
        }
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("C{i}")).collect()
    }

    #[test]
    fn one_dimension_symmetric() {
        let a = DMatrix::from_column_slice(3, 1, &[0.5, 0.3, 0.2]);
        let w = window(a.clone(), a, DMatrix::from_element(1, 1, 4.0));
        let s = simplify_loadings(&w.loadings_row);
        let g = NetworkGraph::build(&w, ModelKind::Symmetric, &names(3), &s, None).unwrap();
        assert_eq!(g.dimension_nodes().count(), 1);
        let flows: Vec<_> = g.edges.iter().filter(|e| !e.dotted).collect();
        assert_eq!(flows.len(), 1);
        assert_eq!((flows[0].from.as_str(), flows[0].to.as_str()), ("F1", "F1"));
        assert_eq!(g.nodes[0].volume, 4.0);
        assert_eq!(g.edges.iter().filter(|e| e.dotted).count(), 3);
    }

    #[test]
    fn asymmetric_rank_four_has_eight_dimensions() {
        let a = DMatrix::from_fn(6, 4, |i, k| if i % 4 == k { 1.0 } else { 0.0 });
        let a = DMatrix::from_fn(6, 4, |i, k| a[(i, k)] / a.column(k).sum());
        let f = DMatrix::from_fn(4, 4, |i, j| (i * 4 + j) as f64);
        let w = window(a.clone(), a, f);
        let s = simplify_loadings(&w.loadings_row);
        let g = NetworkGraph::build(&w, ModelKind::Asymmetric, &names(6), &s, Some(&s)).unwrap();
        let ids: Vec<_> = g.dimension_nodes().map(|n| n.id.as_str()).collect();
        assert_eq!(ids, ["Im1", "Im2", "Im3", "Im4", "Ex1", "Ex2", "Ex3", "Ex4"]);
        let e = g.edges.iter().find(|e| e.from == "Ex3" && e.to == "Im2").unwrap();
        assert_eq!(e.width, 6.0);
        assert_eq!(e.color, PALETTE[1]);
        let dot = g.to_dot();
        assert!(dot.contains("\"Ex3\" -> \"Im2\" [width=6.000000"));
        assert!(dot.contains("style=dotted"));
        let back: NetworkGraph = serde_json::from_str(&g.to_json().unwrap()).unwrap();
        assert_eq!(back, g);
        assert!(NetworkGraph::build(&w, ModelKind::Asymmetric, &names(6), &s, None).is_err());
    }

    #[test]
    fn heatmap_shapes_and_round_trip() {
        let a = DMatrix::from_row_slice(3, 2, &[0.5, 0.25, 0.25, 0.25, 0.25, 0.5]);
        let w = window(a.clone(), a, DMatrix::identity(2, 2));
        let maps = heatmaps(&[w], &names(3), LoadingSide::Row).unwrap();
        assert_eq!(maps.len(), 2);
        assert_eq!(maps[1].values, vec![vec![0.25], vec![0.25], vec![0.5]]);
        let back: Vec<Heatmap> = serde_json::from_str(&Heatmap::to_json(&maps).unwrap()).unwrap();
        assert_eq!(back, maps);
        let csv = Heatmap::to_csv(&maps);
        assert!(csv.starts_with("factor_slot,entity,window,value\n1,C0,1983,0.5000000000\n"));
        for line in csv.lines().skip(1) {
            let v: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }
}
