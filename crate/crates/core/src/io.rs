//! XML reader and writer for the provenance-extended document format.
//!
//! Reading maps each `Origin` element to its concrete kind via `xsi:type`
//! and captures unmodeled subtrees verbatim. Writing is deterministic:
//! two-space indentation, children on new lines, a fixed child order per
//! element, and text escaping that always encodes `&`, `<` and `>`.

use sha2::{Digest, Sha256};

use crate::model::*;
use crate::xml::{self, Location, XmlElement};

#[derive(Debug, Clone, Default)]
pub struct ParseDiagnostics {
    pub warnings: Vec<(Location, String)>,
    /// True when unmodeled content was encountered and carried along.
    pub recovered: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("XML syntax error at {location}: {message}")]
    XmlSyntax { location: Location, message: String },
    #[error("unknown origin kind {value:?}")]
    UnknownOriginKind { value: String },
    #[error("{element} is missing required field {field}")]
    MissingRequiredField { element: String, field: String },
    #[error("{element} may not carry field {field}")]
    UnexpectedField { element: String, field: String },
    #[error("{element}/{field} has invalid value {value:?}")]
    InvalidValue {
        element: String,
        field: String,
        value: String,
    },
}

fn missing(element: &str, field: &str) -> ParseError {
    ParseError::MissingRequiredField {
        element: element.into(),
        field: field.into(),
    }
}

fn invalid(element: &str, field: &str, value: &str) -> ParseError {
    ParseError::InvalidValue {
        element: element.into(),
        field: field.into(),
        value: value.into(),
    }
}

/// Parse a UTF-8 XML document.
pub fn parse(bytes: &[u8]) -> Result<(XsamsDocument, ParseDiagnostics), ParseError> {
    let input = std::str::from_utf8(bytes).map_err(|e| ParseError::XmlSyntax {
        location: Location { line: 1, column: 1 },
        message: format!("input is not UTF-8: {e}"),
    })?;
    parse_str(input)
}

pub fn parse_str(input: &str) -> Result<(XsamsDocument, ParseDiagnostics), ParseError> {
    let root = xml::parse_tree(input).map_err(|e| ParseError::XmlSyntax {
        location: xml::location_at(input, e.offset),
        message: e.message,
    })?;
    let mut reader = DocReader {
        input,
        diagnostics: ParseDiagnostics::default(),
    };
    let doc = reader.read_document(&root)?;
    let mut diagnostics = reader.diagnostics;
    diagnostics.recovered = !diagnostics.warnings.is_empty();
    Ok((doc, diagnostics))
}

struct DocReader<'a> {
    input: &'a str,
    diagnostics: ParseDiagnostics,
}

impl<'a> DocReader<'a> {
    fn warn(&mut self, element: &XmlElement, message: String) {
        let location = xml::location_at(self.input, element.pos);
        self.diagnostics.warnings.push((location, message));
    }

    fn read_document(&mut self, root: &XmlElement) -> Result<XsamsDocument, ParseError> {
        if root.local_name() != "XSAMSData" {
            return Err(ParseError::XmlSyntax {
                location: xml::location_at(self.input, root.pos),
                message: format!("root element is {}, expected XSAMSData", root.name),
            });
        }
        let declared_ns = match root.name.split_once(':') {
            Some((prefix, _)) => root.attr(&format!("xmlns:{prefix}")),
            None => root.attr("xmlns"),
        };
        if declared_ns != Some(XSAMS_NAMESPACE) {
            return Err(ParseError::XmlSyntax {
                location: xml::location_at(self.input, root.pos),
                message: format!("root element is not in the {XSAMS_NAMESPACE} namespace"),
            });
        }

        let mut doc = XsamsDocument {
            root_attrs: root.attrs.clone(),
            ..Default::default()
        };
        for child in root.child_elements() {
            match child.local_name() {
                "Origin" => doc.origins.push(self.read_origin(child)?),
                "Species" => {
                    for section in child.child_elements() {
                        match section.local_name() {
                            "Atoms" => {
                                for atom in section.child_elements() {
                                    doc.atoms.push(self.read_atom(atom)?);
                                }
                            }
                            "Molecules" => {
                                for molecule in section.child_elements() {
                                    doc.molecules.push(self.read_molecule(molecule)?);
                                }
                            }
                            other => {
                                self.warn(section, format!("unmodeled Species section {other} preserved"));
                                doc.extra.push(section.clone());
                            }
                        }
                    }
                }
                "Processes" => {
                    for section in child.child_elements() {
                        match section.local_name() {
                            "Radiative" => {
                                for t in section.child_elements() {
                                    doc.radiative.push(self.read_radiative(t)?);
                                }
                            }
                            "Collisions" => {
                                for c in section.child_elements() {
                                    doc.collisions.push(self.read_collision(c)?);
                                }
                            }
                            other => {
                                self.warn(section, format!("unmodeled Processes section {other} preserved"));
                                doc.extra.push(section.clone());
                            }
                        }
                    }
                }
                "Sources" => {
                    for source in child.child_elements() {
                        doc.sources.push(self.read_source(source)?);
                    }
                }
                "Comments" => doc.comments = Some(child.text()),
                other => {
                    self.warn(child, format!("unmodeled element {other} preserved"));
                    doc.extra.push(child.clone());
                }
            }
        }
        Ok(doc)
    }

    fn read_origin(&mut self, e: &XmlElement) -> Result<Origin, ParseError> {
        let ty = e
            .attr_local("type")
            .ok_or_else(|| missing("Origin", "xsi:type"))?;
        let kind = OriginKind::from_xsi_type(ty).ok_or_else(|| ParseError::UnknownOriginKind {
            value: ty.to_string(),
        })?;

        let mut timestamp = None;
        let mut versions = Vec::new();
        let mut homepage_url = None;
        let mut name = None;
        let mut comments = None;
        let mut query = None;
        let mut origin_identifier = None;
        let mut sub_origins = Vec::new();
        for child in e.child_elements() {
            match child.local_name() {
                "Timestamp" => timestamp = Some(child.text()),
                "Version" => versions.push(self.read_version(child)?),
                "HomepageUrl" => homepage_url = Some(child.text()),
                "Name" => name = Some(child.text()),
                "Comments" => comments = Some(child.text()),
                "Query" => query = Some(child.text()),
                "OriginIdentifier" => origin_identifier = Some(child.text()),
                "Origin" => sub_origins.push(self.read_origin(child)?),
                other => self.warn(child, format!("unmodeled Origin field {other} ignored")),
            }
        }

        if kind == OriginKind::Node && query.is_none() {
            return Err(missing("Origin", "Query"));
        }
        if kind != OriginKind::Node && query.is_some() {
            return Err(ParseError::UnexpectedField {
                element: "Origin".into(),
                field: "Query".into(),
            });
        }
        if matches!(kind, OriginKind::Node | OriginKind::Processor) && origin_identifier.is_none()
        {
            return Err(missing("Origin", "OriginIdentifier"));
        }
        if versions.is_empty() {
            return Err(missing("Origin", "Version"));
        }
        Ok(Origin {
            kind,
            timestamp: Timestamp::new(timestamp.ok_or_else(|| missing("Origin", "Timestamp"))?),
            versions,
            homepage_url: homepage_url.ok_or_else(|| missing("Origin", "HomepageUrl"))?,
            name: name.ok_or_else(|| missing("Origin", "Name"))?,
            comments,
            query,
            origin_identifier,
            sub_origins,
        })
    }

    fn read_version(&mut self, e: &XmlElement) -> Result<Version, ParseError> {
        let version_id = e
            .attr("versionID")
            .ok_or_else(|| missing("Version", "versionID"))?
            .to_string();
        let global = match e.attr("global") {
            None => false,
            Some("true") => true,
            Some("false") => false,
            Some(other) => return Err(invalid("Version", "global", other)),
        };
        let timestamp = e
            .attr("timestamp")
            .ok_or_else(|| missing("Version", "timestamp"))?;
        let mut version = Version::new(version_id, Timestamp::new(timestamp));
        version.global = global;
        for child in e.child_elements() {
            let text = child.text();
            match child.local_name() {
                "SpeciesRef" => version.species_refs.push(text),
                "StateRef" => version.state_refs.push(text),
                "ProcessRef" => version.process_refs.push(text),
                "SourceRef" => version.source_refs.push(text),
                other => self.warn(child, format!("unmodeled Version field {other} ignored")),
            }
        }
        Ok(version)
    }

    fn read_atom(&mut self, e: &XmlElement) -> Result<AtomSpecies, ParseError> {
        let element = e
            .child("ChemicalElement")
            .ok_or_else(|| missing("Atom", "ChemicalElement"))?;
        let nuclear_charge_text = element
            .child("NuclearCharge")
            .ok_or_else(|| missing("Atom", "NuclearCharge"))?
            .text();
        let nuclear_charge = nuclear_charge_text
            .trim()
            .parse()
            .map_err(|_| invalid("Atom", "NuclearCharge", &nuclear_charge_text))?;
        let element_symbol = element
            .child("ElementSymbol")
            .ok_or_else(|| missing("Atom", "ElementSymbol"))?
            .text();

        let isotope = e.child("Isotope").ok_or_else(|| missing("Atom", "Isotope"))?;
        let parameters = isotope
            .child("IsotopeParameters")
            .ok_or_else(|| missing("Atom", "IsotopeParameters"))?;
        let mass_number_text = parameters
            .child("MassNumber")
            .ok_or_else(|| missing("Atom", "MassNumber"))?
            .text();
        let mass_number = mass_number_text
            .trim()
            .parse()
            .map_err(|_| invalid("Atom", "MassNumber", &mass_number_text))?;
        let mass_value_el = parameters
            .child("Mass")
            .and_then(|m| m.child("Value"))
            .ok_or_else(|| missing("Atom", "Mass"))?;
        let mass_units = mass_value_el.attr("units").unwrap_or("").to_string();
        let mass_value = mass_value_el.text();

        let ion = isotope.child("Ion").ok_or_else(|| missing("Atom", "Ion"))?;
        let species_id = ion
            .attr("speciesID")
            .ok_or_else(|| missing("Ion", "speciesID"))?
            .to_string();
        let ion_charge_text = ion
            .child("IonCharge")
            .ok_or_else(|| missing("Ion", "IonCharge"))?
            .text();
        let ion_charge = ion_charge_text
            .trim()
            .parse()
            .map_err(|_| invalid("Ion", "IonCharge", &ion_charge_text))?;
        let inchikey = ion
            .child("InChIKey")
            .ok_or_else(|| missing("Ion", "InChIKey"))?
            .text();

        let mut states = Vec::new();
        for child in ion.child_elements() {
            if child.local_name() == "AtomicState" {
                states.push(self.read_atomic_state(child)?);
            }
        }
        Ok(AtomSpecies {
            species_id,
            element_symbol,
            nuclear_charge,
            mass_number,
            mass_value,
            mass_units,
            ion_charge,
            inchikey,
            states,
        })
    }

    fn read_atomic_state(&mut self, e: &XmlElement) -> Result<AtomicState, ParseError> {
        let state_id = e
            .attr("stateID")
            .ok_or_else(|| missing("AtomicState", "stateID"))?
            .to_string();
        let mut comments = None;
        let mut source_refs = Vec::new();
        let mut energy = None;
        let mut total_angular_momentum = None;
        let mut extra = Vec::new();
        for child in e.child_elements() {
            match child.local_name() {
                "Comments" => comments = Some(child.text()),
                "SourceRef" => source_refs.push(child.text()),
                "AtomicNumericalData" => {
                    let value = child
                        .child("StateEnergy")
                        .and_then(|s| s.child("Value"))
                        .ok_or_else(|| missing("AtomicState", "StateEnergy"))?;
                    energy = Some((value.text(), value.attr("units").unwrap_or("").to_string()));
                }
                "AtomicQuantumNumbers" => {
                    total_angular_momentum = child
                        .child("TotalAngularMomentum")
                        .map(|t| t.text());
                }
                _ => extra.push(child.clone()),
            }
        }
        let (energy_value, energy_units) =
            energy.ok_or_else(|| missing("AtomicState", "StateEnergy"))?;
        Ok(AtomicState {
            state_id,
            comments,
            source_refs,
            energy_value,
            energy_units,
            total_angular_momentum,
            extra,
        })
    }

    fn read_molecule(&mut self, e: &XmlElement) -> Result<MoleculeSpecies, ParseError> {
        let species_id = e
            .attr("speciesID")
            .ok_or_else(|| missing("Molecule", "speciesID"))?
            .to_string();
        let mcs = e
            .child("MolecularChemicalSpecies")
            .ok_or_else(|| missing("Molecule", "MolecularChemicalSpecies"))?;

        let mut ordinary_formula = None;
        let mut stoichiometric_formula = None;
        let mut chemical_name = None;
        let mut inchi = None;
        let mut inchikey = None;
        let mut vamdc_species_id = None;
        let mut structure = None;
        let mut partition_function = None;
        let mut weight = None;
        let mut comment = None;
        let mut extra = Vec::new();
        for child in mcs.child_elements() {
            match child.local_name() {
                "OrdinaryStructuralFormula" => {
                    ordinary_formula = child.child("Value").map(|v| v.text())
                }
                "StoichiometricFormula" => stoichiometric_formula = Some(child.text()),
                "ChemicalName" => chemical_name = child.child("Value").map(|v| v.text()),
                "InChI" => inchi = Some(child.text()),
                "InChIKey" => inchikey = Some(child.text()),
                "VAMDCSpeciesID" => vamdc_species_id = Some(child.text()),
                "MoleculeStructure" => structure = Some(child.clone()),
                "PartitionFunction" => {
                    let t = child
                        .child("T")
                        .ok_or_else(|| missing("PartitionFunction", "T"))?;
                    let q = child
                        .child("Q")
                        .ok_or_else(|| missing("PartitionFunction", "Q"))?;
                    partition_function = Some(PartitionFunction {
                        t_units: t.attr("units").unwrap_or("").to_string(),
                        t_values: t
                            .child("DataList")
                            .ok_or_else(|| missing("PartitionFunction", "T/DataList"))?
                            .text(),
                        q_values: q
                            .child("DataList")
                            .ok_or_else(|| missing("PartitionFunction", "Q/DataList"))?
                            .text(),
                    });
                }
                "StableMolecularProperties" => {
                    let value = child
                        .child("MolecularWeight")
                        .and_then(|w| w.child("Value"))
                        .ok_or_else(|| missing("Molecule", "MolecularWeight"))?;
                    weight = Some((value.text(), value.attr("units").unwrap_or("").to_string()));
                }
                "Comment" => comment = Some(child.text()),
                _ => extra.push(child.clone()),
            }
        }

        let mut states = Vec::new();
        for child in e.child_elements() {
            if child.local_name() == "MolecularState" {
                states.push(self.read_molecular_state(child)?);
            }
        }
        let (molecular_weight, molecular_weight_units) =
            weight.ok_or_else(|| missing("Molecule", "MolecularWeight"))?;
        Ok(MoleculeSpecies {
            species_id,
            ordinary_formula: ordinary_formula
                .ok_or_else(|| missing("Molecule", "OrdinaryStructuralFormula"))?,
            stoichiometric_formula: stoichiometric_formula
                .ok_or_else(|| missing("Molecule", "StoichiometricFormula"))?,
            chemical_name: chemical_name.ok_or_else(|| missing("Molecule", "ChemicalName"))?,
            inchi: inchi.ok_or_else(|| missing("Molecule", "InChI"))?,
            inchikey: inchikey.ok_or_else(|| missing("Molecule", "InChIKey"))?,
            vamdc_species_id: vamdc_species_id
                .ok_or_else(|| missing("Molecule", "VAMDCSpeciesID"))?,
            structure,
            partition_function,
            molecular_weight,
            molecular_weight_units,
            comment,
            extra,
            states,
        })
    }

    fn read_molecular_state(&mut self, e: &XmlElement) -> Result<MolecularState, ParseError> {
        let state_id = e
            .attr("stateID")
            .ok_or_else(|| missing("MolecularState", "stateID"))?
            .to_string();
        // The exchange format spells the flag "auxillary"; accept the
        // dictionary spelling as well.
        let auxiliary = e
            .attr("auxillary")
            .or_else(|| e.attr("auxiliary"))
            .map(|v| v == "true")
            .unwrap_or(false);

        let mut source_refs = Vec::new();
        let mut description = None;
        let mut energy = None;
        let mut energy_origin_ref = None;
        let mut total_statistical_weight = None;
        let mut nuclear_statistical_weight = None;
        let mut case = None;
        for child in e.child_elements() {
            match child.local_name() {
                "SourceRef" => source_refs.push(child.text()),
                "Description" => description = Some(child.text()),
                "MolecularStateCharacterisation" => {
                    let state_energy = child
                        .child("StateEnergy")
                        .ok_or_else(|| missing("MolecularState", "StateEnergy"))?;
                    energy_origin_ref = state_energy.attr("energyOrigin").map(str::to_string);
                    let value = state_energy
                        .child("Value")
                        .ok_or_else(|| missing("MolecularState", "StateEnergy/Value"))?;
                    energy = Some((value.text(), value.attr("units").unwrap_or("").to_string()));
                    if let Some(w) = child.child("TotalStatisticalWeight") {
                        let text = w.text();
                        total_statistical_weight = Some(text.trim().parse().map_err(|_| {
                            invalid("MolecularState", "TotalStatisticalWeight", &text)
                        })?);
                    }
                    if let Some(w) = child.child("NuclearStatisticalWeight") {
                        let text = w.text();
                        nuclear_statistical_weight = Some(text.trim().parse().map_err(|_| {
                            invalid("MolecularState", "NuclearStatisticalWeight", &text)
                        })?);
                    }
                }
                "Case" => case = Some(child),
                other => self.warn(child, format!("unmodeled MolecularState field {other} ignored")),
            }
        }
        let case = case.ok_or_else(|| missing("MolecularState", "Case"))?;
        let case_id = case
            .attr("caseID")
            .ok_or_else(|| missing("Case", "caseID"))?
            .to_string();
        let mut qn_prefix = case
            .attr_local("type")
            .and_then(|t| t.split_once(':'))
            .map(|(p, _)| p.to_string())
            .unwrap_or_else(|| case_id.clone());
        let mut quantum_numbers = Vec::new();
        if let Some(qns) = case.child("QNs") {
            if let Some((prefix, _)) = qns.name.split_once(':') {
                qn_prefix = prefix.to_string();
            }
            for qn in qns.child_elements() {
                quantum_numbers.push((qn.local_name().to_string(), qn.text()));
            }
        }
        let (energy_value, energy_units) =
            energy.ok_or_else(|| missing("MolecularState", "StateEnergy"))?;
        Ok(MolecularState {
            state_id,
            auxiliary,
            source_refs,
            description,
            energy_value,
            energy_units,
            energy_origin_ref,
            total_statistical_weight,
            nuclear_statistical_weight,
            case_id,
            case_attrs: case.attrs.clone(),
            qn_prefix,
            quantum_numbers,
        })
    }

    fn read_radiative(&mut self, e: &XmlElement) -> Result<RadiativeTransition, ParseError> {
        let id = e
            .attr("id")
            .ok_or_else(|| missing("RadiativeTransition", "id"))?
            .to_string();
        let process_kind = e
            .attr("process")
            .ok_or_else(|| missing("RadiativeTransition", "process"))?
            .to_string();
        let mut source_refs = Vec::new();
        let mut frequency = None;
        let mut frequency_accuracy = None;
        let mut upper = None;
        let mut lower = None;
        let mut species = None;
        let mut probability_a_value = None;
        let mut idealised_intensity = None;
        let mut multipole = None;
        let mut code = None;
        for child in e.child_elements() {
            match child.local_name() {
                "SourceRef" => source_refs.push(child.text()),
                "EnergyWavelength" => {
                    let freq = child
                        .child("Frequency")
                        .ok_or_else(|| missing("RadiativeTransition", "Frequency"))?;
                    let value = freq
                        .child("Value")
                        .ok_or_else(|| missing("RadiativeTransition", "Frequency/Value"))?;
                    frequency =
                        Some((value.text(), value.attr("units").unwrap_or("").to_string()));
                    frequency_accuracy = freq.child("Accuracy").map(|a| a.text());
                }
                "UpperStateRef" => upper = Some(child.text()),
                "LowerStateRef" => lower = Some(child.text()),
                "SpeciesRef" => species = Some(child.text()),
                "Probability" => {
                    if let Some(v) = child
                        .child("TransitionProbabilityA")
                        .and_then(|p| p.child("Value"))
                    {
                        probability_a_value =
                            Some((v.text(), v.attr("units").unwrap_or("").to_string()));
                    }
                    if let Some(v) = child
                        .child("IdealisedIntensity")
                        .and_then(|p| p.child("Value"))
                    {
                        idealised_intensity =
                            Some((v.text(), v.attr("units").unwrap_or("").to_string()));
                    }
                    multipole = child.child("Multipole").map(|m| m.text());
                }
                "ProcessClass" => code = child.child("Code").map(|c| c.text()),
                other => self.warn(
                    child,
                    format!("unmodeled RadiativeTransition field {other} ignored"),
                ),
            }
        }
        let (frequency_value, frequency_units) =
            frequency.ok_or_else(|| missing("RadiativeTransition", "Frequency"))?;
        Ok(RadiativeTransition {
            id,
            process_kind,
            source_refs,
            frequency_value,
            frequency_units,
            frequency_accuracy,
            upper_state_ref: upper.ok_or_else(|| missing("RadiativeTransition", "UpperStateRef"))?,
            lower_state_ref: lower.ok_or_else(|| missing("RadiativeTransition", "LowerStateRef"))?,
            species_ref: species.ok_or_else(|| missing("RadiativeTransition", "SpeciesRef"))?,
            probability_a_value,
            idealised_intensity,
            multipole,
            process_class_code: code
                .ok_or_else(|| missing("RadiativeTransition", "ProcessClass/Code"))?,
        })
    }

    fn read_participant(&mut self, e: &XmlElement) -> Result<Participant, ParseError> {
        Ok(Participant {
            species_ref: e
                .child("SpeciesRef")
                .ok_or_else(|| missing(&e.name, "SpeciesRef"))?
                .text(),
            state_ref: e
                .child("StateRef")
                .ok_or_else(|| missing(&e.name, "StateRef"))?
                .text(),
        })
    }

    fn read_collision(&mut self, e: &XmlElement) -> Result<CollisionalTransition, ParseError> {
        let id = e
            .attr("id")
            .ok_or_else(|| missing("CollisionalTransition", "id"))?
            .to_string();
        let mut comments = None;
        let mut source_refs = Vec::new();
        let mut code = None;
        let mut reactants = Vec::new();
        let mut products = Vec::new();
        let mut datasets = Vec::new();
        for child in e.child_elements() {
            match child.local_name() {
                "Comments" => comments = Some(child.text()),
                "SourceRef" => source_refs.push(child.text()),
                "ProcessClass" => code = child.child("Code").map(|c| c.text()),
                "Reactant" => reactants.push(self.read_participant(child)?),
                "Product" => products.push(self.read_participant(child)?),
                "DataSets" => {
                    for ds in child.child_elements() {
                        datasets.push(self.read_dataset(ds)?);
                    }
                }
                other => self.warn(
                    child,
                    format!("unmodeled CollisionalTransition field {other} ignored"),
                ),
            }
        }
        Ok(CollisionalTransition {
            id,
            comments,
            source_refs,
            process_class_code: code
                .ok_or_else(|| missing("CollisionalTransition", "ProcessClass/Code"))?,
            reactants,
            products,
            datasets,
        })
    }

    fn read_dataset(&mut self, e: &XmlElement) -> Result<TabulatedDataset, ParseError> {
        let description = e.attr("dataDescription").unwrap_or("").to_string();
        let tab = e
            .child("TabulatedData")
            .ok_or_else(|| missing("DataSet", "TabulatedData"))?;
        let x = tab.child("X").ok_or_else(|| missing("DataSet", "X"))?;
        let y = tab.child("Y").ok_or_else(|| missing("DataSet", "Y"))?;
        Ok(TabulatedDataset {
            description,
            comments: tab.child("Comments").map(|c| c.text()),
            x_units: x.attr("units").unwrap_or("").to_string(),
            x_values: x
                .child("DataList")
                .ok_or_else(|| missing("DataSet", "X/DataList"))?
                .text(),
            y_units: y.attr("units").unwrap_or("").to_string(),
            y_values: y
                .child("DataList")
                .ok_or_else(|| missing("DataSet", "Y/DataList"))?
                .text(),
        })
    }

    fn read_source(&mut self, e: &XmlElement) -> Result<Source, ParseError> {
        let source_id = e
            .attr("sourceID")
            .ok_or_else(|| missing("Source", "sourceID"))?
            .to_string();
        let mut category = None;
        let mut source_name = None;
        let mut year = None;
        let mut authors = Vec::new();
        let mut title = None;
        let mut volume = None;
        let mut page_begin = None;
        let mut page_end = None;
        let mut uri = None;
        let mut doi = None;
        let mut production_date = None;
        let mut comments = None;
        for child in e.child_elements() {
            match child.local_name() {
                "Category" => category = Some(child.text()),
                "SourceName" => source_name = Some(child.text()),
                "Year" => {
                    let text = child.text();
                    year = Some(
                        text.trim()
                            .parse()
                            .map_err(|_| invalid("Source", "Year", &text))?,
                    );
                }
                "Authors" => {
                    for author in child.child_elements() {
                        if let Some(name) = author.child("Name") {
                            authors.push(name.text());
                        }
                    }
                }
                "Title" => title = Some(child.text()),
                "Volume" => volume = Some(child.text()),
                "PageBegin" => page_begin = Some(child.text()),
                "PageEnd" => page_end = Some(child.text()),
                "UniformResourceIdentifier" => uri = Some(child.text()),
                "DigitalObjectIdentifier" => doi = Some(child.text()),
                "ProductionDate" => production_date = Some(child.text()),
                "Comments" => comments = Some(child.text()),
                other => self.warn(child, format!("unmodeled Source field {other} ignored")),
            }
        }
        Ok(Source {
            source_id,
            category: category.ok_or_else(|| missing("Source", "Category"))?,
            source_name,
            year: year.ok_or_else(|| missing("Source", "Year"))?,
            authors,
            title,
            volume,
            page_begin,
            page_end,
            uri,
            doi,
            production_date,
            comments,
        })
    }
}

// ---------------------------------------------------------------------------
// Writing
// ---------------------------------------------------------------------------

const SENTINEL_INSTANT: &str = "1970-01-01T00:00:00+00:00";
const SENTINEL_DATE: &str = "1970-01-01";

#[derive(Debug, Clone, Copy, Default)]
struct WriteOptions {
    /// Replace extraction timestamps and production dates with sentinels.
    sentinel_timestamps: bool,
    /// Emit attributes sorted by name instead of declaration order.
    sort_attrs: bool,
}

/// Deterministic serialization of a document.
pub fn serialize(doc: &XsamsDocument) -> Vec<u8> {
    serialize_string(doc).into_bytes()
}

pub fn serialize_string(doc: &XsamsDocument) -> String {
    write_document(doc, WriteOptions::default())
}

/// Hex digest of the canonical form: attribute order normalized, every
/// extraction timestamp and production date replaced by a fixed sentinel.
/// Two extractions differing only in when they were run share a digest.
pub fn canonical_digest(doc: &XsamsDocument) -> String {
    let canonical = write_document(
        doc,
        WriteOptions {
            sentinel_timestamps: true,
            sort_attrs: true,
        },
    );
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

struct DocWriter {
    out: String,
    level: usize,
    opts: WriteOptions,
}

impl DocWriter {
    fn indent(&mut self) {
        for _ in 0..self.level {
            self.out.push_str("  ");
        }
    }

    fn format_attrs(&self, attrs: &[(String, String)]) -> String {
        let mut attrs: Vec<&(String, String)> = attrs.iter().collect();
        if self.opts.sort_attrs {
            attrs.sort_by(|a, b| a.0.cmp(&b.0));
        }
        let mut out = String::new();
        for (k, v) in attrs {
            out.push(' ');
            out.push_str(k);
            out.push_str("=\"");
            out.push_str(&xml::escape_attr(v));
            out.push('"');
        }
        out
    }

    fn open(&mut self, name: &str, attrs: &[(String, String)]) {
        self.indent();
        self.out.push('<');
        self.out.push_str(name);
        self.out.push_str(&self.format_attrs(attrs));
        self.out.push_str(">\n");
        self.level += 1;
    }

    fn close(&mut self, name: &str) {
        self.level -= 1;
        self.indent();
        self.out.push_str("</");
        self.out.push_str(name);
        self.out.push_str(">\n");
    }

    fn leaf(&mut self, name: &str, attrs: &[(String, String)], text: &str) {
        self.indent();
        self.out.push('<');
        self.out.push_str(name);
        self.out.push_str(&self.format_attrs(attrs));
        if text.is_empty() {
            self.out.push_str("/>\n");
        } else {
            self.out.push('>');
            self.out.push_str(&xml::escape_text(text));
            self.out.push_str("</");
            self.out.push_str(name);
            self.out.push_str(">\n");
        }
    }

    fn simple_leaf(&mut self, name: &str, text: &str) {
        self.leaf(name, &[], text);
    }

    fn optional_leaf(&mut self, name: &str, text: &Option<String>) {
        if let Some(text) = text {
            self.simple_leaf(name, text);
        }
    }

    fn verbatim(&mut self, element: &XmlElement) {
        self.indent();
        xml::write_verbatim(element, &mut self.out);
        self.out.push('\n');
    }
}

fn write_document(doc: &XsamsDocument, opts: WriteOptions) -> String {
    let mut w = DocWriter {
        out: String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"),
        level: 0,
        opts,
    };
    w.open("XSAMSData", &doc.root_attrs);
    for origin in &doc.origins {
        write_origin(&mut w, origin);
    }
    if !doc.atoms.is_empty() || !doc.molecules.is_empty() {
        w.open("Species", &[]);
        if !doc.atoms.is_empty() {
            w.open("Atoms", &[]);
            for atom in &doc.atoms {
                write_atom(&mut w, atom);
            }
            w.close("Atoms");
        }
        if !doc.molecules.is_empty() {
            w.open("Molecules", &[]);
            for molecule in &doc.molecules {
                write_molecule(&mut w, molecule);
            }
            w.close("Molecules");
        }
        w.close("Species");
    }
    if !doc.radiative.is_empty() || !doc.collisions.is_empty() {
        w.open("Processes", &[]);
        if !doc.radiative.is_empty() {
            w.open("Radiative", &[]);
            for t in &doc.radiative {
                write_radiative(&mut w, t);
            }
            w.close("Radiative");
        }
        if !doc.collisions.is_empty() {
            w.open("Collisions", &[]);
            for c in &doc.collisions {
                write_collision(&mut w, c);
            }
            w.close("Collisions");
        }
        w.close("Processes");
    }
    if !doc.sources.is_empty() {
        w.open("Sources", &[]);
        for source in &doc.sources {
            write_source(&mut w, source);
        }
        w.close("Sources");
    }
    for extra in &doc.extra {
        w.verbatim(extra);
    }
    if let Some(comments) = &doc.comments {
        w.simple_leaf("Comments", comments);
    }
    w.close("XSAMSData");
    w.out
}

fn write_origin(w: &mut DocWriter, origin: &Origin) {
    w.open(
        "Origin",
        &[("xsi:type".into(), origin.kind.xsi_type().into())],
    );
    let timestamp = if w.opts.sentinel_timestamps {
        SENTINEL_INSTANT
    } else {
        origin.timestamp.as_str()
    };
    w.simple_leaf("Timestamp", timestamp);
    for version in &origin.versions {
        let attrs = vec![
            ("versionID".to_string(), version.version_id.clone()),
            ("global".to_string(), version.global.to_string()),
            ("timestamp".to_string(), version.timestamp.as_str().to_string()),
        ];
        if version.is_empty() {
            w.leaf("Version", &attrs, "");
        } else {
            w.open("Version", &attrs);
            for r in &version.species_refs {
                w.simple_leaf("SpeciesRef", r);
            }
            for r in &version.state_refs {
                w.simple_leaf("StateRef", r);
            }
            for r in &version.process_refs {
                w.simple_leaf("ProcessRef", r);
            }
            for r in &version.source_refs {
                w.simple_leaf("SourceRef", r);
            }
            w.close("Version");
        }
    }
    w.simple_leaf("HomepageUrl", &origin.homepage_url);
    w.simple_leaf("Name", &origin.name);
    w.optional_leaf("Comments", &origin.comments);
    w.optional_leaf("Query", &origin.query);
    w.optional_leaf("OriginIdentifier", &origin.origin_identifier);
    for sub in &origin.sub_origins {
        write_origin(w, sub);
    }
    w.close("Origin");
}

fn write_atom(w: &mut DocWriter, atom: &AtomSpecies) {
    w.open("Atom", &[]);
    w.open("ChemicalElement", &[]);
    w.simple_leaf("NuclearCharge", &atom.nuclear_charge.to_string());
    w.simple_leaf("ElementSymbol", &atom.element_symbol);
    w.close("ChemicalElement");
    w.open("Isotope", &[]);
    w.open("IsotopeParameters", &[]);
    w.simple_leaf("MassNumber", &atom.mass_number.to_string());
    w.open("Mass", &[]);
    w.leaf(
        "Value",
        &[("units".to_string(), atom.mass_units.clone())],
        &atom.mass_value,
    );
    w.close("Mass");
    w.close("IsotopeParameters");
    w.open("Ion", &[("speciesID".into(), atom.species_id.clone())]);
    w.simple_leaf("IonCharge", &atom.ion_charge.to_string());
    for state in &atom.states {
        write_atomic_state(w, state);
    }
    w.simple_leaf("InChIKey", &atom.inchikey);
    w.close("Ion");
    w.close("Isotope");
    w.close("Atom");
}

fn write_atomic_state(w: &mut DocWriter, state: &AtomicState) {
    w.open(
        "AtomicState",
        &[("stateID".into(), state.state_id.clone())],
    );
    w.optional_leaf("Comments", &state.comments);
    for r in &state.source_refs {
        w.simple_leaf("SourceRef", r);
    }
    w.open("AtomicNumericalData", &[]);
    w.open("StateEnergy", &[]);
    w.leaf(
        "Value",
        &[("units".to_string(), state.energy_units.clone())],
        &state.energy_value,
    );
    w.close("StateEnergy");
    w.close("AtomicNumericalData");
    if let Some(j) = &state.total_angular_momentum {
        w.open("AtomicQuantumNumbers", &[]);
        w.simple_leaf("TotalAngularMomentum", j);
        w.close("AtomicQuantumNumbers");
    }
    for extra in &state.extra {
        w.verbatim(extra);
    }
    w.close("AtomicState");
}

fn write_molecule(w: &mut DocWriter, molecule: &MoleculeSpecies) {
    w.open(
        "Molecule",
        &[("speciesID".into(), molecule.species_id.clone())],
    );
    w.open("MolecularChemicalSpecies", &[]);
    w.open("OrdinaryStructuralFormula", &[]);
    w.simple_leaf("Value", &molecule.ordinary_formula);
    w.close("OrdinaryStructuralFormula");
    w.simple_leaf("StoichiometricFormula", &molecule.stoichiometric_formula);
    w.open("ChemicalName", &[]);
    w.simple_leaf("Value", &molecule.chemical_name);
    w.close("ChemicalName");
    w.simple_leaf("InChI", &molecule.inchi);
    w.simple_leaf("InChIKey", &molecule.inchikey);
    w.simple_leaf("VAMDCSpeciesID", &molecule.vamdc_species_id);
    if let Some(structure) = &molecule.structure {
        w.verbatim(structure);
    }
    for extra in &molecule.extra {
        w.verbatim(extra);
    }
    if let Some(pf) = &molecule.partition_function {
        w.open("PartitionFunction", &[]);
        w.open("T", &[("units".to_string(), pf.t_units.clone())]);
        w.simple_leaf("DataList", &pf.t_values);
        w.close("T");
        w.open("Q", &[]);
        w.simple_leaf("DataList", &pf.q_values);
        w.close("Q");
        w.close("PartitionFunction");
    }
    w.open("StableMolecularProperties", &[]);
    w.open("MolecularWeight", &[]);
    w.leaf(
        "Value",
        &[("units".to_string(), molecule.molecular_weight_units.clone())],
        &molecule.molecular_weight,
    );
    w.close("MolecularWeight");
    w.close("StableMolecularProperties");
    w.optional_leaf("Comment", &molecule.comment);
    w.close("MolecularChemicalSpecies");
    for state in &molecule.states {
        write_molecular_state(w, state);
    }
    w.close("Molecule");
}

fn write_molecular_state(w: &mut DocWriter, state: &MolecularState) {
    let mut attrs = Vec::new();
    if state.auxiliary {
        attrs.push(("auxillary".to_string(), "true".to_string()));
    }
    attrs.push(("stateID".to_string(), state.state_id.clone()));
    w.open("MolecularState", &attrs);
    for r in &state.source_refs {
        w.simple_leaf("SourceRef", r);
    }
    w.optional_leaf("Description", &state.description);
    w.open("MolecularStateCharacterisation", &[]);
    let energy_attrs: Vec<(String, String)> = state
        .energy_origin_ref
        .iter()
        .map(|r| ("energyOrigin".to_string(), r.clone()))
        .collect();
    w.open("StateEnergy", &energy_attrs);
    w.leaf(
        "Value",
        &[("units".to_string(), state.energy_units.clone())],
        &state.energy_value,
    );
    w.close("StateEnergy");
    if let Some(weight) = state.total_statistical_weight {
        w.simple_leaf("TotalStatisticalWeight", &weight.to_string());
    }
    if let Some(weight) = state.nuclear_statistical_weight {
        w.simple_leaf("NuclearStatisticalWeight", &weight.to_string());
    }
    w.close("MolecularStateCharacterisation");
    w.open("Case", &state.case_attrs);
    let qns_name = format!("{}:QNs", state.qn_prefix);
    w.open(&qns_name, &[]);
    for (name, value) in &state.quantum_numbers {
        w.simple_leaf(&format!("{}:{}", state.qn_prefix, name), value);
    }
    w.close(&qns_name);
    w.close("Case");
    w.close("MolecularState");
}

fn write_radiative(w: &mut DocWriter, t: &RadiativeTransition) {
    w.open(
        "RadiativeTransition",
        &[
            ("id".to_string(), t.id.clone()),
            ("process".to_string(), t.process_kind.clone()),
        ],
    );
    for r in &t.source_refs {
        w.simple_leaf("SourceRef", r);
    }
    w.open("EnergyWavelength", &[]);
    w.open("Frequency", &[]);
    w.leaf(
        "Value",
        &[("units".to_string(), t.frequency_units.clone())],
        &t.frequency_value,
    );
    w.optional_leaf("Accuracy", &t.frequency_accuracy);
    w.close("Frequency");
    w.close("EnergyWavelength");
    w.simple_leaf("UpperStateRef", &t.upper_state_ref);
    w.simple_leaf("LowerStateRef", &t.lower_state_ref);
    w.simple_leaf("SpeciesRef", &t.species_ref);
    if t.probability_a_value.is_some() || t.idealised_intensity.is_some() || t.multipole.is_some()
    {
        w.open("Probability", &[]);
        if let Some((value, units)) = &t.probability_a_value {
            w.open("TransitionProbabilityA", &[]);
            w.leaf("Value", &[("units".to_string(), units.clone())], value);
            w.close("TransitionProbabilityA");
        }
        if let Some((value, units)) = &t.idealised_intensity {
            w.open("IdealisedIntensity", &[]);
            w.leaf("Value", &[("units".to_string(), units.clone())], value);
            w.close("IdealisedIntensity");
        }
        w.optional_leaf("Multipole", &t.multipole);
        w.close("Probability");
    }
    w.open("ProcessClass", &[]);
    w.simple_leaf("Code", &t.process_class_code);
    w.close("ProcessClass");
    w.close("RadiativeTransition");
}

fn write_collision(w: &mut DocWriter, c: &CollisionalTransition) {
    w.open(
        "CollisionalTransition",
        &[("id".to_string(), c.id.clone())],
    );
    w.optional_leaf("Comments", &c.comments);
    for r in &c.source_refs {
        w.simple_leaf("SourceRef", r);
    }
    w.open("ProcessClass", &[]);
    w.simple_leaf("Code", &c.process_class_code);
    w.close("ProcessClass");
    for (name, list) in [("Reactant", &c.reactants), ("Product", &c.products)] {
        for p in list {
            w.open(name, &[]);
            w.simple_leaf("SpeciesRef", &p.species_ref);
            w.simple_leaf("StateRef", &p.state_ref);
            w.close(name);
        }
    }
    if !c.datasets.is_empty() {
        w.open("DataSets", &[]);
        for ds in &c.datasets {
            w.open(
                "DataSet",
                &[("dataDescription".to_string(), ds.description.clone())],
            );
            w.open("TabulatedData", &[]);
            w.optional_leaf("Comments", &ds.comments);
            w.open("X", &[("units".to_string(), ds.x_units.clone())]);
            w.simple_leaf("DataList", &ds.x_values);
            w.close("X");
            w.open("Y", &[("units".to_string(), ds.y_units.clone())]);
            w.simple_leaf("DataList", &ds.y_values);
            w.close("Y");
            w.close("TabulatedData");
            w.close("DataSet");
        }
        w.close("DataSets");
    }
    w.close("CollisionalTransition");
}

fn write_source(w: &mut DocWriter, source: &Source) {
    w.open("Source", &[("sourceID".into(), source.source_id.clone())]);
    w.simple_leaf("Category", &source.category);
    w.optional_leaf("SourceName", &source.source_name);
    w.simple_leaf("Year", &source.year.to_string());
    if !source.authors.is_empty() {
        w.open("Authors", &[]);
        for author in &source.authors {
            w.open("Author", &[]);
            w.simple_leaf("Name", author);
            w.close("Author");
        }
        w.close("Authors");
    }
    w.optional_leaf("Title", &source.title);
    w.optional_leaf("Volume", &source.volume);
    w.optional_leaf("PageBegin", &source.page_begin);
    w.optional_leaf("PageEnd", &source.page_end);
    w.optional_leaf("UniformResourceIdentifier", &source.uri);
    w.optional_leaf("DigitalObjectIdentifier", &source.doi);
    let production_date = if w.opts.sentinel_timestamps {
        source.production_date.as_ref().map(|_| SENTINEL_DATE.to_string())
    } else {
        source.production_date.clone()
    };
    w.optional_leaf("ProductionDate", &production_date);
    w.optional_leaf("Comments", &source.comments);
    w.close("Source");
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<XSAMSData xmlns="http://vamdc.org/xml/xsams/1.0" xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance">
  <Origin xsi:type="VamdcNodeOriginType">
    <Timestamp>2015-12-03T14:40:21+01:00</Timestamp>
    <Version versionID="V1" global="false" timestamp="2015-09-01T08:10:12+01:00"/>
    <HomepageUrl>http://example.org</HomepageUrl>
    <Name>Example</Name>
    <Query>select * where ((A = 'x'))</Query>
    <OriginIdentifier>ivo://example</OriginIdentifier>
  </Origin>
</XSAMSData>
"#;

    #[test]
    fn minimal_document_round_trips() {
        let (doc, diag) = parse(MINIMAL.as_bytes()).unwrap();
        assert!(!diag.recovered);
        assert_eq!(doc.origins.len(), 1);
        assert_eq!(doc.origins[0].kind, OriginKind::Node);
        let bytes = serialize(&doc);
        let (again, _) = parse(&bytes).unwrap();
        assert_eq!(doc, again);
    }

    #[test]
    fn node_origin_without_query_is_rejected() {
        let input = MINIMAL.replace("    <Query>select * where ((A = 'x'))</Query>\n", "");
        match parse(input.as_bytes()) {
            Err(ParseError::MissingRequiredField { element, field }) => {
                assert_eq!(element, "Origin");
                assert_eq!(field, "Query");
            }
            other => panic!("expected missing-field error, got {other:?}"),
        }
    }

    #[test]
    fn other_origin_with_query_is_rejected() {
        let input = MINIMAL
            .replace("VamdcNodeOriginType", "OtherOriginType")
            .replace(
                "    <OriginIdentifier>ivo://example</OriginIdentifier>\n",
                "",
            );
        match parse(input.as_bytes()) {
            Err(ParseError::UnexpectedField { field, .. }) => assert_eq!(field, "Query"),
            other => panic!("expected unexpected-field error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_origin_kind_is_rejected() {
        let input = MINIMAL.replace("VamdcNodeOriginType", "MysteryOriginType");
        match parse(input.as_bytes()) {
            Err(ParseError::UnknownOriginKind { value }) => {
                assert_eq!(value, "MysteryOriginType")
            }
            other => panic!("expected unknown-kind error, got {other:?}"),
        }
    }

    #[test]
    fn query_escaping_matches_exchange_style() {
        let (doc, _) = parse(MINIMAL.as_bytes()).unwrap();
        let mut doc = doc;
        doc.origins[0].query = Some("a >= 1 AND b <= 2 & done".into());
        let text = serialize_string(&doc);
        assert!(text.contains("a &gt;= 1 AND b &lt;= 2 &amp; done"));
    }

    #[test]
    fn digest_ignores_extraction_timestamp() {
        let (doc, _) = parse(MINIMAL.as_bytes()).unwrap();
        let mut edited = doc.clone();
        edited.origins[0].timestamp = Timestamp::new("2016-01-01T00:00:00+00:00");
        assert_eq!(canonical_digest(&doc), canonical_digest(&edited));
        let mut changed = doc.clone();
        changed.origins[0].versions[0].source_refs.push("S9".into());
        assert_ne!(canonical_digest(&doc), canonical_digest(&changed));
    }

    #[test]
    fn unmodeled_content_is_reported_with_location() {
        let input = MINIMAL.replace(
            "<Name>Example</Name>",
            "<Name>Example</Name>\n    <Mystery>?</Mystery>",
        );
        let (_, diag) = parse(input.as_bytes()).unwrap();
        assert!(diag.recovered);
        assert_eq!(diag.warnings.len(), 1);
        let (location, message) = &diag.warnings[0];
        assert!(message.contains("Mystery"));
        assert!(location.line > 1);
        assert!(location.column >= 1);
    }

    #[test]
    fn syntax_error_reports_location() {
        let err = parse(b"<XSAMSData xmlns=\"http://vamdc.org/xml/xsams/1.0\">\n<broken\n").unwrap_err();
        match err {
            ParseError::XmlSyntax { location, .. } => assert!(location.line >= 1),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }
}
