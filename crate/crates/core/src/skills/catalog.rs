//! Default skills for the five pipeline stages. Instruction texts are
//! editable defaults.

use super::schema::{field, optional, OutputSchema};
use super::Skill;
use crate::formula::Role;

pub const CATEGORY_VOCABULARY: [&str; 11] = [
    "nickel_alloy",
    "steel_iron",
    "polymer",
    "rock",
    "ice",
    "ceramic",
    "aluminum_alloy",
    "titanium_alloy",
    "metallic_glass",
    "composite",
    "other",
];

const DEFAULT_RETRIES: u32 = 2;

pub fn navigator() -> Skill {
    Skill::new(
        "bibliographic_navigator",
        "Bibliographic Navigator",
        "Rewrite the material query \"{query}\" as Boolean retrieval logic using AND, OR, NOT, parentheses and \
         quoted phrases. Expand implied keywords into OR groups of concrete material classes and keep every salient \
         term of the original query.",
        &["corpus_lookup"],
        OutputSchema::record(vec![field("query", OutputSchema::BooleanQuery)]),
        DEFAULT_RETRIES,
    )
    .expect("valid skill")
}

pub fn domain_filter() -> Skill {
    Skill::new(
        "domain_filter",
        "Domain Filter",
        "Read the full text and figure captions of document {bundle_id} (\"{title}\"). Decide whether it reports \
         experimental creep data (has_data) and whether it states an explicit constitutive equation (has_equation). \
         Purely theoretical or simulation-only studies have no experimental data. Give a one-sentence rationale.",
        &["read_pages"],
        OutputSchema::record(vec![
            field("has_data", OutputSchema::Boolean),
            field("has_equation", OutputSchema::Boolean),
            optional("rationale", OutputSchema::text()),
        ]),
        DEFAULT_RETRIES,
    )
    .expect("valid skill")
}

fn binding_schema() -> OutputSchema {
    let roles: Vec<&str> = Role::ALL.iter().map(|r| r.as_str()).collect();
    OutputSchema::record(vec![
        field("symbol", OutputSchema::text()),
        field("role", OutputSchema::enumeration(&roles)),
        field("unit", OutputSchema::text()),
    ])
}

fn anchor_schema() -> OutputSchema {
    OutputSchema::List {
        items: Box::new(OutputSchema::record(vec![
            field("pixel", OutputSchema::Number),
            field("value", OutputSchema::Number),
        ])),
        min_items: 2,
    }
}

pub fn multimodal_parser() -> Skill {
    let model = OutputSchema::record(vec![
        optional("name", OutputSchema::text()),
        field("equation", OutputSchema::text()),
        optional("bindings", OutputSchema::list(binding_schema())),
        optional(
            "parameters",
            OutputSchema::list(OutputSchema::record(vec![
                field("name", OutputSchema::text()),
                field("value", OutputSchema::Number),
                optional("unit", OutputSchema::text()),
            ])),
        ),
    ]);
    let figure = OutputSchema::record(vec![
        field("figure_id", OutputSchema::text()),
        field("x_scale", OutputSchema::enumeration(&["linear", "log10"])),
        field("y_scale", OutputSchema::enumeration(&["linear", "log10"])),
        field("x_anchors", anchor_schema()),
        field("y_anchors", anchor_schema()),
        field("time_unit", OutputSchema::text()),
        field("strain_unit", OutputSchema::text()),
        field(
            "series",
            OutputSchema::List {
                items: Box::new(OutputSchema::record(vec![
                    field("label", OutputSchema::text()),
                    field("color", OutputSchema::text()),
                ])),
                min_items: 1,
            },
        ),
        optional(
            "plot_area",
            OutputSchema::record(vec![
                field("left", OutputSchema::Integer),
                field("top", OutputSchema::Integer),
                field("right", OutputSchema::Integer),
                field("bottom", OutputSchema::Integer),
            ]),
        ),
    ]);
    Skill::new(
        "multimodal_parser",
        "MultiModal Parser",
        "Extract the creep study in document {bundle_id}: material name and category, test temperature and stress, \
         the constitutive equation with every symbol bound to a role and unit, reported parameter values, and for the \
         figure showing the target condition the axis anchors (pixel, value), scales and series colors with legend \
         labels. Use the unified variable names eps (strain), t (time), sigma (stress) and T (temperature).",
        &["read_pages", "figure_info"],
        OutputSchema::record(vec![
            field("material", OutputSchema::Text { non_empty: true }),
            field("category", OutputSchema::enumeration(&CATEGORY_VOCABULARY)),
            field("temperature", OutputSchema::quantity("K")),
            field("stress", OutputSchema::quantity("MPa")),
            optional("target_condition", OutputSchema::text()),
            optional("model", model),
            optional("figure", figure),
            optional("text_locations", OutputSchema::list(OutputSchema::text())),
        ]),
        DEFAULT_RETRIES,
    )
    .expect("valid skill")
}

pub fn physics_guardrail() -> Skill {
    Skill::new(
        "physics_guardrail",
        "Physics Guardrail",
        "Check completeness, time-dependence, dimensional homogeneity and cross-modal agreement for {bundle_id}.",
        &["parse_formula", "check_units", "evaluate_model"],
        OutputSchema::record(vec![field(
            "verdict",
            OutputSchema::enumeration(&["Valid", "Valid-TextOnly", "Flagged", "Rejected"]),
        )]),
        0,
    )
    .expect("valid skill")
}

pub fn data_serializer() -> Skill {
    Skill::new(
        "data_serializer",
        "Data Serializer",
        "Serialize the validated record for {bundle_id} with its DOI and evidence links.",
        &["store_write"],
        OutputSchema::record(vec![field("record_id", OutputSchema::Integer)]),
        0,
    )
    .expect("valid skill")
}

/// The five stage skills in pipeline order.
pub fn pipeline_skills() -> [Skill; 5] {
    [navigator(), domain_filter(), multimodal_parser(), physics_guardrail(), data_serializer()]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn personas_and_scopes() {
        let personas: Vec<String> = pipeline_skills().iter().map(|s| s.persona.clone()).collect();
        assert_eq!(
            personas,
            ["Bibliographic Navigator", "Domain Filter", "MultiModal Parser", "Physics Guardrail", "Data Serializer"]
        );
        assert!(!domain_filter().allowed_tools.contains("store_write"));
        assert!(!multimodal_parser().allowed_tools.contains("store_write"));
        assert_eq!(data_serializer().allowed_tools.len(), 1);
    }
}
