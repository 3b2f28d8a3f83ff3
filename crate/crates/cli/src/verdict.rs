use std::collections::BTreeMap;
use std::io::Write;

/// A scored subject: a gadget or function name, or `pid:process_name`.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub subject: String,
    pub score: f64,
    pub label: u8,
}

impl Verdict {
    pub fn new(subject: String, score: f64, threshold: f64) -> Self {
        Verdict {
            subject,
            score,
            label: u8::from(score >= threshold),
        }
    }
}

/// Writes `subject,score,label` CSV with a header row.
pub fn write_verdicts<W: Write>(verdicts: &[Verdict], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["subject", "score", "label"])?;
    for v in verdicts {
        w.write_record([v.subject.as_str(), &v.score.to_string(), &v.label.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One verdict per pid: the fraction of its samples labeled 1, called
/// malicious when that fraction is at least one half.
pub fn aggregate_by_pid(per_sample: &[(u32, String, u8)]) -> Vec<Verdict> {
    let mut groups: BTreeMap<u32, (String, usize, usize)> = BTreeMap::new();
    for (pid, name, label) in per_sample {
        let g = groups.entry(*pid).or_insert_with(|| (name.clone(), 0, 0));
        g.1 += usize::from(*label);
        g.2 += 1;
    }
    groups
        .into_iter()
        .map(|(pid, (name, ones, n))| Verdict::new(format!("{pid}:{name}"), ones as f64 / n as f64, 0.5))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn majority_rule() {
        let v = aggregate_by_pid(&[(7, "a".into(), 1), (7, "a".into(), 1), (7, "a".into(), 0), (3, "b".into(), 0)]);
        assert_eq!(v[0].subject, "3:b");
        assert_eq!(v[0].label, 0);
        assert_eq!(v[1].label, 1);
        let tie = aggregate_by_pid(&[(1, "x".into(), 1), (1, "x".into(), 0)]);
        assert_eq!((tie[0].score, tie[0].label), (0.5, 1));
    }

    #[test]
    fn label_follows_threshold() {
        assert_eq!(Verdict::new("s".into(), 0.5, 0.5).label, 1);
        assert_eq!(Verdict::new("s".into(), 0.49, 0.5).label, 0);
        assert_eq!(Verdict::new("s".into(), 0.0, 0.0).label, 1);
    }

    #[test]
    fn csv_quotes_awkward_subjects() {
        let mut buf = Vec::new();
        write_verdicts(&[Verdict::new("1:a,b".into(), 0.25, 0.5)], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "subject,score,label\n\"1:a,b\",0.25,0\n");
    }
}
