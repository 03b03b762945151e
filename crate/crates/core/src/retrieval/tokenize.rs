/// Lowercased word pieces: splits on non-alphanumerics and on camelCase
/// boundaries, and drops single-character pieces.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split(|c: char| !c.is_alphanumeric()) {
        if word.is_empty() {
            continue;
        }
        split_camel(word, &mut out);
    }
    out
}

fn split_camel(word: &str, out: &mut Vec<String>) {
    let chars: Vec<char> = word.chars().collect();
    let mut start = 0;
    for i in 1..chars.len() {
        let (prev, cur) = (chars[i - 1], chars[i]);
        let next_lower = chars.get(i + 1).is_some_and(|c| c.is_lowercase());
        // fooBar | HTTPServer -> HTTP Server
        let boundary = (prev.is_lowercase() && cur.is_uppercase())
            || (prev.is_uppercase() && cur.is_uppercase() && next_lower);
        if boundary {
            push(&chars[start..i], out);
            start = i;
        }
    }
    push(&chars[start..], out);
}

fn push(piece: &[char], out: &mut Vec<String>) {
    if piece.len() > 1 {
        out.push(piece.iter().collect::<String>().to_lowercase());
    }
}
