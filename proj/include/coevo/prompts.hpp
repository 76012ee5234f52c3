#pragma once

#include <string>

#include "coevo/types.hpp"

namespace coevo::prompts {

// Canonical message templates. These are the default system/user texts sent
// to every backend; the simulator recognizes roles by the system prompt and
// the tag/boxed grammars in the parse module are matched to them.

inline constexpr const char* kQuestionerSystem =
    "You are a professional question designer.";

inline constexpr const char* kQuestionerUser =
    "Create a multiple-choice question based on the image. Let's think step "
    "by step.\n"
    "First, you must fully perceive the image, extracting any valuable visual "
    "information from it and generate a detailed visual description of the "
    "image.\n"
    "Then, write a multiple-choice question that includes necessary "
    "conditions. \n"
    "- Make sure the question provides sufficient information to be answered. "
    "Use phrases like \"If...\" or \"Given that...\" to state condition shown "
    "in visual description if it's a geometry question.\n"
    "- The question must include four options, one of which is the correct "
    "answer. \n"
    "- Provide the correct answer to the generated question without thinking. "
    "It must be one of A/B/C/D, and MUST BE enclosed within <answer> "
    "</answer> tags.\n"
    "- Any question type other than multiple-choice is STRICTLY FORBIDDEN!\n"
    "\n"
    "Your MUST response in this format:\n"
    "\n"
    "<description>\n"
    "{Visual description you extract from the image}\n"
    "</description>\n"
    "\n"
    "<question>\n"
    "{Write a complete multiple-choice question that states all necessary "
    "conditions clearly, followed by exactly 4 answer options A B C D}\n"
    "</question>\n"
    "\n"
    "<answer>\n"
    "{Correct answer option A/B/C/D} \n"
    "</answer>\n"
    "\n"
    "DO NOT output anything else—no explanations, no extra markup.";

inline constexpr const char* kSolverSystem =
    "You are a professional question solver.";

inline constexpr const char* kSolverUserPrefix =
    "Solve the multiple-choice question based on the provided image. Let's "
    "think step by step.\n"
    "First, you must fully perceive the image, extracting any valuable visual "
    "information from it.\n"
    "Then, solve the question, give the correct choice option.\n"
    "\n"
    "The reasoning process MUST BE enclosed within <think> </think> tags.\n"
    "The final answer MUST BE single option A/B/C/D put in \\boxed{}.";

inline constexpr const char* kJudgeSystem =
    "You are a professional question evaluator.";

inline constexpr const char* kJudgeUserPrefix =
    "Score the difficulty of the following visual reasoning question on a "
    "scale from 0.0 (easiest) to 1.0 (hardest), where:\n"
    "\n"
    "0.1–0.4 (Simple): Basic object counting or simple chart reading;\n"
    "0.4–0.7 (Medium): Application of geometric relations or chart trend "
    "analysis;\n"
    "0.7–1.0 (Hard): Complex geometric proofs or multi-step algebraic "
    "reasoning.\n"
    "\n"
    "Output only a single number between 0.0 and 1.0. Do not include any "
    "other text, explanation, or formatting.";

// Question text is appended after the fixed prefix; the image travels as a
// separate message part.
std::string solver_user(const McqQuestion& question);
std::string judge_user(const McqQuestion& question);

}  // namespace coevo::prompts
