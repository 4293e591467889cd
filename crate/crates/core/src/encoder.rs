//! Embedding lookup, bidirectional LSTM and pooling.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::BoundLstm;
use crate::numerics::{Tape, Tensor, Var};
use crate::text::{Vocabulary, PAD};

/// `[m, e]` embedding rows for `ids`. The PAD row never receives a gradient.
pub fn embed(tape: &mut Tape<'_>, table: Var, ids: &[usize]) -> Result<Var> {
    if ids.is_empty() {
        return Err(Error::EmptySequence);
    }
    tape.gather_rows(table, ids, Some(PAD))
}

/// One LSTM direction over the rows of `inputs`; row `i` of the result is the state after input `i`.
fn direction(tape: &mut Tape<'_>, cell: &BoundLstm, inputs: Var, reverse: bool) -> Result<Var> {
    let m = tape.value(inputs).shape()[0];
    let h = tape.value(cell.w_hidden).shape()[0];
    let projected = tape.matmul(inputs, cell.w_input)?;
    let bias = tape.repeat_rows(cell.bias, m)?;
    let pre = tape.add(projected, bias)?;
    let mut c = tape.constant(Tensor::zeros(&[h]));
    let mut prev: Option<Var> = None;
    let mut states = vec![None; m];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..m).rev())
    } else {
        Box::new(0..m)
    };
    for t in order {
        let mut z = tape.row(pre, t)?;
        if let Some(hp) = prev {
            let rec = tape.matmul(hp, cell.w_hidden)?;
            z = tape.add(z, rec)?;
        }
        let hc = tape.lstm_cell(z, c)?;
        let ht = tape.slice(hc, 0, h)?;
        c = tape.slice(hc, h, h)?;
        states[t] = Some(ht);
        prev = Some(ht);
    }
    let rows: Vec<Var> = states
        .into_iter()
        .map(|s| s.expect("every step visited"))
        .collect();
    tape.stack_rows(&rows)
}

/// `[m, 2h]` outputs: forward state after inputs `1..=i` beside backward state after inputs `m..=i`.
pub fn bilstm(tape: &mut Tape<'_>, fwd: &BoundLstm, bwd: &BoundLstm, emb: Var) -> Result<Var> {
    let f = direction(tape, fwd, emb, false)?;
    let b = direction(tape, bwd, emb, true)?;
    tape.concat(&[f, b], 1)
}

pub fn mean_pool(tape: &mut Tape<'_>, outputs: Var) -> Result<Var> {
    tape.mean_rows(outputs)
}

pub fn max_pool(tape: &mut Tape<'_>, outputs: Var) -> Result<Var> {
    tape.max_rows(outputs)
}

/// Overwrites embedding rows from a `word v1 … ve` text file. Returns the number of rows replaced.
pub fn load_pretrained(path: &Path, vocab: &Vocabulary, embedding: &mut Tensor) -> Result<usize> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let (_, e) = embedding
        .dims2()
        .ok_or_else(|| Error::invalid("load_pretrained", "embedding must be a matrix"))?;
    let mut loaded = HashMap::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else { continue };
        let values: Vec<f64> = fields
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|err| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: format!("bad vector component: {err}"),
            })?;
        if values.len() != e {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: format!("expected {e} components, found {}", values.len()),
            });
        }
        let id = vocab.id(word);
        if id > PAD {
            loaded.insert(id, values);
        }
    }
    for (&id, values) in &loaded {
        embedding.row_mut(id).copy_from_slice(values);
    }
    Ok(loaded.len())
}
