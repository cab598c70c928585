use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::parse_field;

/// Per-node feature matrix: row `i` holds the features of graph node `i`,
/// which stands for MDP state `node_to_state[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    pub rows: DMatrix<f64>,
    pub node_to_state: Vec<usize>,
}

impl BasisMatrix {
    pub fn new(rows: DMatrix<f64>, node_to_state: Vec<usize>) -> Result<Self> {
        if rows.nrows() != node_to_state.len() {
            return Err(Error::Dimension(format!("{} feature rows for {} nodes", rows.nrows(), node_to_state.len())));
        }
        if rows.iter().any(|x| !x.is_finite()) {
            return Err(Error::Contract("basis has non-finite entries".into()));
        }
        Ok(BasisMatrix { rows, node_to_state })
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn n_nodes(&self) -> usize {
        self.rows.nrows()
    }

    /// Features indexed by state id; states without a node get a zero row.
    pub fn state_features(&self, n_states: usize) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(n_states, self.dim());
        for (node, &s) in self.node_to_state.iter().enumerate() {
            if s < n_states {
                out.row_mut(s).copy_from(&self.rows.row(node));
            }
        }
        out
    }

    /// The first `d` columns.
    pub fn truncated(&self, d: usize) -> Result<Self> {
        if d > self.dim() {
            return Err(Error::Dimension(format!("cannot take {d} of {} columns", self.dim())));
        }
        Ok(BasisMatrix { rows: self.rows.columns(0, d).into_owned(), node_to_state: self.node_to_state.clone() })
    }

    /// One line per node: `node_id<TAB>f_1<TAB>...<TAB>f_d`.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        for i in 0..self.n_nodes() {
            write!(out, "{i}")?;
            for x in self.rows.row(i).iter() {
                write!(out, "\t{x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Reads a TSV written by [`BasisMatrix::write_tsv`]; node ids double as
    /// state ids.
    pub fn read_tsv<R: BufRead>(input: R) -> Result<Self> {
        let mut ids = Vec::new();
        let mut values = Vec::new();
        let mut dim = None;
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let id: usize = parse_field(fields.next().unwrap_or(""), i + 1)?;
            let row: Vec<f64> = fields.map(|f| parse_field(f, i + 1)).collect::<Result<_>>()?;
            if *dim.get_or_insert(row.len()) != row.len() {
                return Err(Error::Parse { line: i + 1, reason: "ragged feature row".into() });
            }
            ids.push(id);
            values.extend(row);
        }
        let d = dim.unwrap_or(0);
        BasisMatrix::new(DMatrix::from_row_slice(ids.len(), d, &values), ids)
    }
}
