//! Small graph utilities over dense `usize` node ids.

/// Strongly connected components, in reverse topological order of the
/// condensation (a component comes before every component that reaches it).
/// Iterative, so deep graphs do not overflow the stack.
pub fn tarjan_scc(n: usize, succs: &[Vec<usize>]) -> Vec<Vec<usize>> {
    const UNSEEN: usize = usize::MAX;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut out = Vec::new();
    let mut next = 0;
    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut i)) = call.last_mut() {
            if *i < succs[v].len() {
                let w = succs[v][*i];
                *i += 1;
                if index[w] == UNSEEN {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("scc stack underflow");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    out.push(comp);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_cycles_and_a_tail() {
        // 0 -> 1 -> 0, 1 -> 2, 2 -> 3 -> 2
        let g = vec![vec![1], vec![0, 2], vec![3], vec![2]];
        let sccs = tarjan_scc(4, &g);
        assert_eq!(sccs, vec![vec![2, 3], vec![0, 1]]);
    }

    #[test]
    fn singletons() {
        let g = vec![vec![1], vec![2], vec![]];
        assert_eq!(tarjan_scc(3, &g), vec![vec![2], vec![1], vec![0]]);
    }
}
