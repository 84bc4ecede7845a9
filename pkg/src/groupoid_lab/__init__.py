"""Desk-scale workbench for expansion in measured groupoids."""
