//! Canonical labeling of small vertex-colored hypergraphs by color
//! refinement plus individualization, taking the least leaf code.

/// Vertex colors and labeled hyperedges over vertices `0..colors.len()`.
#[derive(Clone, Debug, Default)]
pub(crate) struct CanonInput {
    pub colors: Vec<u64>,
    pub edges: Vec<(u64, Vec<usize>)>,
}

struct Ctx<'a> {
    inp: &'a CanonInput,
    inc: Vec<Vec<(usize, usize)>>,
}

pub(crate) fn canonical_code(inp: &CanonInput) -> Vec<u64> {
    canonical_labeling(inp).0
}

/// The canonical code and, for each vertex, its canonical position.
pub(crate) fn canonical_labeling(inp: &CanonInput) -> (Vec<u64>, Vec<usize>) {
    let n = inp.colors.len();
    let mut inc = vec![Vec::new(); n];
    for (i, (_, args)) in inp.edges.iter().enumerate() {
        for (pos, &v) in args.iter().enumerate() {
            inc[v].push((i, pos));
        }
    }
    let ctx = Ctx { inp, inc };
    let start = ranks(&inp.colors);
    let mut best = None;
    ctx.search(start, &mut best);
    best.unwrap_or_default()
}

fn ranks<T: Ord + Clone>(keys: &[T]) -> Vec<u32> {
    let mut sorted: Vec<T> = keys.to_vec();
    sorted.sort();
    sorted.dedup();
    keys.iter()
        .map(|k| sorted.binary_search(k).unwrap() as u32)
        .collect()
}

fn cells(colors: &[u32]) -> usize {
    let mut c = colors.to_vec();
    c.sort_unstable();
    c.dedup();
    c.len()
}

impl Ctx<'_> {
    fn refine(&self, mut colors: Vec<u32>) -> Vec<u32> {
        let mut count = cells(&colors);
        loop {
            let sigs: Vec<(u32, Vec<Vec<u64>>)> = (0..colors.len())
                .map(|v| {
                    let mut around: Vec<Vec<u64>> = self.inc[v]
                        .iter()
                        .map(|&(e, pos)| {
                            let (label, args) = &self.inp.edges[e];
                            let mut s = vec![*label, pos as u64];
                            s.extend(args.iter().map(|&u| colors[u] as u64));
                            s
                        })
                        .collect();
                    around.sort();
                    (colors[v], around)
                })
                .collect();
            colors = ranks(&sigs);
            let next = cells(&colors);
            if next == count {
                return colors;
            }
            count = next;
        }
    }

    fn leaf(&self, colors: &[u32]) -> Vec<u64> {
        let n = colors.len();
        let mut code = vec![n as u64];
        let mut by_pos = vec![0u64; n];
        for v in 0..n {
            by_pos[colors[v] as usize] = self.inp.colors[v];
        }
        code.extend(by_pos);
        let mut edges: Vec<Vec<u64>> = self
            .inp
            .edges
            .iter()
            .map(|(label, args)| {
                let mut e = vec![*label, args.len() as u64];
                e.extend(args.iter().map(|&u| colors[u] as u64));
                e
            })
            .collect();
        edges.sort();
        edges.dedup();
        code.push(edges.len() as u64);
        for e in edges {
            code.extend(e);
        }
        code
    }

    fn search(&self, colors: Vec<u32>, best: &mut Option<(Vec<u64>, Vec<usize>)>) {
        let colors = self.refine(colors);
        let n = colors.len();
        let mut size = vec![0usize; n];
        for &c in &colors {
            size[c as usize] += 1;
        }
        let Some(target) = (0..n).find(|&c| size[c] > 1) else {
            let code = self.leaf(&colors);
            if best.as_ref().map_or(true, |(b, _)| code < *b) {
                let perm = colors.iter().map(|&c| c as usize).collect();
                *best = Some((code, perm));
            }
            return;
        };
        let members: Vec<usize> = (0..n).filter(|&v| colors[v] as usize == target).collect();
        for v in members {
            let next: Vec<u32> = (0..n)
                .map(|u| colors[u] * 2 + if u == v { 0 } else { 1 })
                .collect();
            self.search(next, best);
        }
    }
}
