//! Unified diff parsing, enough to recover pre-image lines per file.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FileDiff {
    /// Path in the pre-image (`a/` side); `None` for added files.
    pub old_path: Option<String>,
    /// Path in the post-image (`b/` side); `None` for deleted files.
    pub new_path: Option<String>,
    /// `-` lines with their pre-image line numbers.
    pub removed: Vec<(u32, String)>,
    /// `+` lines with their post-image line numbers.
    pub added: Vec<(u32, String)>,
}

impl FileDiff {
    /// The name the file is reported under: post-image path, else pre-image.
    pub fn path(&self) -> &str {
        self.new_path.as_deref().or(self.old_path.as_deref()).unwrap_or("")
    }
}

fn strip_side(p: &str, side: &str) -> Option<String> {
    let p = p.trim_end_matches('\t');
    if p == "/dev/null" {
        return None;
    }
    Some(p.strip_prefix(side).unwrap_or(p).to_string())
}

fn parse_hunk_header(line: &str) -> Option<(u32, u32)> {
    // @@ -a[,b] +c[,d] @@
    let rest = line.strip_prefix("@@ -")?;
    let (old, rest) = rest.split_once(' ')?;
    let new = rest.strip_prefix('+')?.split(' ').next()?;
    let start = |s: &str| s.split(',').next().and_then(|n| n.parse::<u32>().ok());
    Some((start(old)?, start(new)?))
}

/// Parse `git diff` output produced with `--no-prefix` off (the default
/// `a/`/`b/` prefixes) and `core.quotepath=off`.
pub fn parse_unified_diff(text: &str) -> Vec<FileDiff> {
    let mut files: Vec<FileDiff> = Vec::new();
    let mut old_ln = 0u32;
    let mut new_ln = 0u32;
    let mut in_hunk = false;
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("diff --git ") {
            let mut fd = FileDiff::default();
            if let Some((a, b)) = rest.split_once(" b/") {
                fd.old_path = strip_side(a, "a/");
                fd.new_path = Some(b.to_string());
            }
            files.push(fd);
            in_hunk = false;
            continue;
        }
        let Some(fd) = files.last_mut() else { continue };
        if !in_hunk {
            if let Some(p) = line.strip_prefix("--- ") {
                fd.old_path = strip_side(p, "a/");
            } else if let Some(p) = line.strip_prefix("+++ ") {
                fd.new_path = strip_side(p, "b/");
            } else if let Some(p) = line.strip_prefix("rename from ") {
                fd.old_path = Some(p.to_string());
            } else if let Some(p) = line.strip_prefix("rename to ") {
                fd.new_path = Some(p.to_string());
            } else if line.starts_with("new file mode") {
                fd.old_path = None;
            } else if line.starts_with("deleted file mode") {
                fd.new_path = None;
            }
        }
        if line.starts_with("@@ ") {
            if let Some((o, n)) = parse_hunk_header(line) {
                old_ln = o;
                new_ln = n;
                in_hunk = true;
            }
            continue;
        }
        if !in_hunk {
            continue;
        }
        if let Some(t) = line.strip_prefix('-') {
            fd.removed.push((old_ln, t.to_string()));
            old_ln += 1;
        } else if let Some(t) = line.strip_prefix('+') {
            fd.added.push((new_ln, t.to_string()));
            new_ln += 1;
        } else if line.starts_with(' ') || line.is_empty() {
            old_ln += 1;
            new_ln += 1;
        }
    }
    files
}

/// Pre-image lines touched by the diff, keyed by pre-image path.
pub fn removed_lines(files: &[FileDiff]) -> BTreeMap<String, Vec<(u32, String)>> {
    let mut out: BTreeMap<String, Vec<(u32, String)>> = BTreeMap::new();
    for f in files {
        if f.removed.is_empty() {
            continue;
        }
        let path = f.old_path.clone().unwrap_or_else(|| f.path().to_string());
        out.entry(path).or_default().extend(f.removed.iter().cloned());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const DIFF: &str = "diff --git a/a.c b/a.c
index 111..222 100644
--- a/a.c
+++ b/a.c
@@ -3,5 +3,4 @@ int f(void)
 three
 four
-five
-six
+FIVE
 seven
diff --git a/new.c b/new.c
new file mode 100644
index 000..333
--- /dev/null
+++ b/new.c
@@ -0,0 +1,2 @@
+x
+y
";

    #[test]
    fn pre_image_line_numbers() {
        let files = parse_unified_diff(DIFF);
        assert_eq!(files.len(), 2);
        assert_eq!(files[0].removed, [(5, "five".into()), (6, "six".into())]);
        assert_eq!(files[0].added, [(5, "FIVE".into())]);
        assert_eq!(files[1].old_path, None);
        assert_eq!(files[1].path(), "new.c");
        let rm = removed_lines(&files);
        assert_eq!(rm.len(), 1);
        assert_eq!(rm["a.c"].len(), 2);
    }

    #[test]
    fn rename_with_edit_reports_old_path() {
        let d = "diff --git a/old.c b/new.c
similarity index 90%
rename from old.c
rename to new.c
index 1..2 100644
--- a/old.c
+++ b/new.c
@@ -1,2 +1,2 @@
-a
+b
 c
";
        let files = parse_unified_diff(d);
        assert_eq!(files[0].old_path.as_deref(), Some("old.c"));
        assert_eq!(files[0].new_path.as_deref(), Some("new.c"));
        assert_eq!(removed_lines(&files)["old.c"], [(1, "a".into())]);
    }

    #[test]
    fn mode_change_has_no_lines() {
        let d = "diff --git a/s.sh b/s.sh\nold mode 100644\nnew mode 100755\n";
        let files = parse_unified_diff(d);
        assert_eq!(files.len(), 1);
        assert!(removed_lines(&files).is_empty());
    }
}
