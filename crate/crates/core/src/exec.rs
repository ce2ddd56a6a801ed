//! Execution strategy for embarrassingly parallel work (realizations, blocks).
//!
//! With the `parallel` feature the work is spread over the rayon pool;
//! otherwise, or with [`Execution::Sequential`], it runs in a plain loop.
//! Results always come back in index order.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    /// Applies `f` to `0..len` and collects the results in order.
    pub fn map<T, F>(self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                (0..len).into_par_iter().map(f).collect()
            }
            _ => (0..len).map(f).collect(),
        }
    }

    /// Like [`Execution::map`] but stops at the first error (in index order).
    pub fn try_map<T, E, F>(self, len: usize, f: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(usize) -> Result<T, E> + Sync + Send,
    {
        self.map(len, f).into_iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let par = Execution::Parallel.map(100, |i| i * i);
        let seq = Execution::Sequential.map(100, |i| i * i);
        assert_eq!(par, seq);
        assert_eq!(par[7], 49);
    }

    #[test]
    fn first_error_wins() {
        let r: Result<Vec<usize>, usize> = Execution::Parallel.try_map(10, |i| if i >= 3 { Err(i) } else { Ok(i) });
        assert_eq!(r, Err(3));
    }
}
