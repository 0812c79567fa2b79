#pragma once

#include <atomic>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <unistd.h>

#include "pomr/encounters.hpp"
#include "pomr/kb.hpp"

namespace support {

inline pomr::Code med(const std::string& id) { return pomr::Code(pomr::CodeSystem::RXNORM, id); }
inline pomr::Code proc(const std::string& id) { return pomr::Code(pomr::CodeSystem::CPT, id); }
inline pomr::Code lab(const std::string& id) { return pomr::Code(pomr::CodeSystem::LOINC, id); }
inline pomr::Code icd(const std::string& id) { return pomr::Code(pomr::CodeSystem::ICD10, id); }

inline pomr::Order order(pomr::RelationKind kind, const pomr::Code& code,
                         std::optional<pomr::Code> link = std::nullopt) {
    return pomr::Order{kind, code, std::move(link)};
}

inline pomr::EncounterRecord encounter(const std::string& patient, const std::string& id, const std::string& date,
                                       const std::string& facility, std::vector<pomr::Code> dx,
                                       std::vector<pomr::Order> orders,
                                       std::optional<std::string> specialty = std::nullopt) {
    pomr::EncounterRecord r;
    r.patient_id = patient;
    r.encounter_id = id;
    r.date = date;
    r.facility_id = facility;
    r.diagnoses.insert(dx.begin(), dx.end());
    r.orders = std::move(orders);
    r.provider_specialty = std::move(specialty);
    return r;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
    static std::atomic<int> counter{0};
    const auto dir = std::filesystem::temp_directory_path() /
                     ("pomr_" + name + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace support
