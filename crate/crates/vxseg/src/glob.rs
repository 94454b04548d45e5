//! Minimal glob matching for parameter-name filters: `*` matches any
//! substring (including `/`), everything else is literal.

/// True if `name` matches `pattern`.
pub fn glob_match(pattern: &str, name: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let n: Vec<char> = name.chars().collect();
    // dp[i][j]: pattern[..i] matches name[..j]
    let mut prev = vec![false; n.len() + 1];
    prev[0] = true;
    for (i, &pc) in p.iter().enumerate() {
        let mut cur = vec![false; n.len() + 1];
        if pc == '*' {
            cur[0] = prev[0];
            for j in 1..=n.len() {
                cur[j] = cur[j - 1] || prev[j];
            }
        } else {
            for j in 1..=n.len() {
                cur[j] = prev[j - 1] && pc == n[j - 1];
            }
        }
        prev = cur;
        let _ = i;
    }
    prev[n.len()]
}
