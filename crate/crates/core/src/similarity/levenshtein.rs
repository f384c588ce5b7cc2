use super::SymbolSequence;

/// Unit-cost edit distance between two slices, two-row dynamic program.
pub fn levenshtein_by<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit distance over pitch symbols only.
pub fn levenshtein(a: &SymbolSequence, b: &SymbolSequence) -> usize {
    levenshtein_by(&a.pitches(), &b.pitches())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let s = |p: &[u8]| SymbolSequence::from_pitches(p);
        assert_eq!(levenshtein(&s(&[60, 62, 64]), &s(&[60, 62, 64])), 0);
        assert_eq!(levenshtein(&s(&[]), &s(&[1, 2, 3, 4])), 4);
        // C B G vs A C B G
        assert_eq!(levenshtein(&s(&[72, 71, 67]), &s(&[69, 72, 71, 67])), 1);
        assert_eq!(levenshtein_by(b"kitten", b"sitting"), 3);
    }

    proptest! {
        #[test]
        fn metric_axioms(
            a in prop::collection::vec(0u8..4, 0..10),
            b in prop::collection::vec(0u8..4, 0..10),
            c in prop::collection::vec(0u8..4, 0..10),
        ) {
            let ab = levenshtein_by(&a, &b);
            prop_assert_eq!(ab, levenshtein_by(&b, &a));
            prop_assert_eq!(levenshtein_by(&a, &a), 0);
            prop_assert_eq!(ab == 0, a == b);
            prop_assert!(levenshtein_by(&a, &c) <= ab + levenshtein_by(&b, &c));
        }
    }
}
