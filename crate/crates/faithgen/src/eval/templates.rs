//! Versioned judge prompt templates. The wording lives in `templates/` so a
//! template change is a reviewable file diff; ids name template and version.

pub const T1_ENUMERATE_INPUT: &str = "t1_enumerate_input_v1";
pub const T2_FACT_CHECK: &str = "t2_fact_check_v1";
pub const T3_EXTRINSIC: &str = "t3_extrinsic_v1";
pub const T3_INTRINSIC: &str = "t3_intrinsic_v1";
pub const FLUENCY: &str = "fluency_v1";

const T1_TEXT: &str = include_str!("../../templates/t1_enumerate_input_v1.txt");
const T2_TEXT: &str = include_str!("../../templates/t2_fact_check_v1.txt");
const T3_EXTRINSIC_TEXT: &str = include_str!("../../templates/t3_extrinsic_v1.txt");
const T3_INTRINSIC_TEXT: &str = include_str!("../../templates/t3_intrinsic_v1.txt");
const FLUENCY_TEXT: &str = include_str!("../../templates/fluency_v1.txt");

pub fn enumerate_input_prompt(input: &str) -> String {
    T1_TEXT.replace("{input}", input)
}

pub fn fact_check_prompt(fact: &str, output: &str) -> String {
    T2_TEXT.replace("{fact}", fact).replace("{output}", output)
}

pub fn extrinsic_prompt(input: &str, output: &str) -> String {
    T3_EXTRINSIC_TEXT.replace("{input}", input).replace("{output}", output)
}

pub fn intrinsic_prompt(input: &str, output: &str) -> String {
    T3_INTRINSIC_TEXT.replace("{input}", input).replace("{output}", output)
}

pub fn fluency_prompt(output: &str) -> String {
    FLUENCY_TEXT.replace("{output}", output)
}

/// Extracts the body of a `NAME:` section from a prompt: the lines after the
/// header up to the next section header or the end. Used by the offline
/// judges, which answer from the prompt text alone.
pub fn extract_section<'a>(prompt: &'a str, name: &str) -> Option<&'a str> {
    let header = format!("{name}:\n");
    let start = prompt.find(&header)? + header.len();
    let rest = &prompt[start..];
    let end = ["\nINPUT:\n", "\nOUTPUT:\n", "\nFACT:\n"]
        .iter()
        .filter_map(|h| rest.find(h))
        .min()
        .unwrap_or(rest.len());
    Some(rest[..end].trim())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_round_trip_through_prompts() {
        let p = fact_check_prompt("bedrooms: 5", "a house with five bedrooms .");
        assert_eq!(extract_section(&p, "FACT"), Some("bedrooms: 5"));
        assert_eq!(extract_section(&p, "OUTPUT"), Some("a house with five bedrooms ."));
        assert_eq!(extract_section(&p, "INPUT"), None);

        let p = extrinsic_prompt("<H> h <R> r <T> t", "some text");
        assert_eq!(extract_section(&p, "INPUT"), Some("<H> h <R> r <T> t"));
        assert_eq!(extract_section(&p, "OUTPUT"), Some("some text"));
    }

    #[test]
    fn every_template_mentions_its_placeholders() {
        assert!(enumerate_input_prompt("XX").contains("XX"));
        assert!(fluency_prompt("YY").contains("YY"));
        assert!(intrinsic_prompt("A", "B").contains("contradictory"));
        assert!(extrinsic_prompt("A", "B").contains("not mentioned"));
    }
}
