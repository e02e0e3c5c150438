#pragma once

#include <set>
#include <string>
#include <string_view>

#include "tit/core/types.hpp"

namespace tit::harness {

inline constexpr std::string_view kPromptForgeTemplateId = "prompt-forge-v1";

/// Meta-instruction for an external LLM that expands a core theme into a
/// long benchmark prompt covering six building blocks. This wording is this
/// project's own.
inline std::string prompt_forge_template(std::string_view theme, std::string_view idea) {
  std::string s;
  s += "You are writing a prompt for a text-to-image model. Expand the core idea below into one fluid, ";
  s += "coherent paragraph of natural English of at least 250 words. Cover all six building blocks, ";
  s += "woven together rather than listed:\n";
  s += "1. Core Subject: who or what the picture is about, how they look and what they are doing.\n";
  s += "2. Environment/Setting: where the scene takes place, from the overall location down to small details.\n";
  s += "3. Composition & Framing: viewing angle, subject placement and depth of field.\n";
  s += "4. Lighting & Color Palette: light sources, direction and intensity, and the dominant colors.\n";
  s += "5. Art Style: the intended artistic style of the final image.\n";
  s += "6. Details & Mood: dynamic elements, surface textures and the overall mood.\n";
  s += "Output only the paragraph.\n\n";
  s += "Theme category: ";
  s += theme;
  s += "\nCore idea: ";
  s += idea.empty() ? std::string_view("(choose one that fits the theme)") : idea;
  s += "\n";
  return s;
}

}  // namespace tit::harness
